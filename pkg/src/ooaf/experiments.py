"""Benchmark drivers shared by the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ObjectPair
from .data import apply_occlusion, synthetic_benchmark
from .metrics import MetricReport, evaluate
from .model.config import ModelConfig
from .model.train import train_one_shot

DEFAULT_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5)


def occlude_pair(pair: ObjectPair, level: float, seed: int) -> ObjectPair:
    """Both objects lose ``level`` of their points to independent spherical occluders."""
    src = apply_occlusion(pair.source, level, seed * 2)
    tgt = apply_occlusion(pair.target, level, seed * 2 + 1)
    return ObjectPair(src, tgt, pair.category)


def occlusion_curve(pairs: Sequence[ObjectPair], params, cfg: ModelConfig, levels=DEFAULT_LEVELS, seed: int = 0) -> list:
    """[(level, MetricReport)]; sample i at every level uses occluder seed (seed, i)."""
    out = []
    for level in levels:
        occluded = [occlude_pair(p, level, seed * 100003 + i) for i, p in enumerate(pairs)]
        out.append((float(level), evaluate(occluded, params, cfg)))
    return out


def curve_csv(curve) -> str:
    lines = ["level,aiou,sim,mae,auc"]
    for level, rep in curve:
        lines.append(f"{100 * level:.0f},{rep.aiou:.6f},{rep.sim:.6f},{rep.mae:.6f},{rep.auc:.6f}")
    return "\n".join(lines) + "\n"


ABLATIONS = {
    "full": dict(feature_mode="part", attention="joint"),
    "zero_feature": dict(feature_mode="none", attention="joint"),
    "self_attention": dict(feature_mode="part", attention="self"),
}


@dataclass
class AblationRun:
    name: str
    seed: int
    train: MetricReport
    eval: MetricReport
    params: dict
    config: ModelConfig


def benchmark_config(seed: int = 0, **overrides) -> ModelConfig:
    """Compact widths at N = 512, T = 64, k = 16."""
    base = dict(num_groups=64, group_size=16, seed=seed)
    base.update(overrides)
    return ModelConfig.compact(**base)


def run_ablation(name: str, seed: int = 0, n_eval: int = 10, perturbation: float = 0.3, cfg: Optional[ModelConfig] = None) -> AblationRun:
    spec = ABLATIONS[name]
    train, evals = synthetic_benchmark(n_eval=n_eval, perturbation=perturbation, seed=seed, feature_mode=spec["feature_mode"])
    cfg = (cfg or benchmark_config(seed)).replace(attention=spec["attention"], seed=seed)
    result = train_one_shot(train, cfg)
    return AblationRun(name, seed, evaluate(train, result.params, cfg), evaluate(evals, result.params, cfg), result.params, cfg)


def non_increasing(values: Sequence[float], allowance: float) -> bool:
    v = np.asarray(values, dtype=np.float64)
    return bool(np.all(np.diff(v) <= allowance))
