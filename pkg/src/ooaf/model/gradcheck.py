"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import FeatureCloud, normalize_cloud
from .config import ModelConfig
from .network import PRED_CLAMP, SOURCE, TARGET, PairPass, forward_geo, init_params, loss_and_grads, pair_loss, prepare
from .layers import sigmoid

# denominators never drop below this (key biases have an identically zero gradient)
GRAD_FLOOR = 1e-7


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_tensor: dict = field(default_factory=dict)
    max_entry_error: float = 0.0
    entries_checked: int = 0
    kinks_skipped: int = 0
    seconds: float = 0.0
    loss: float = 0.0


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise error ||a - n|| / max(||a||, ||n||) over the probed entries of one tensor."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    if analytic.size == 0:
        return 0.0
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), GRAD_FLOOR)
    return float(np.linalg.norm(analytic - numeric) / denom)


def entry_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Per-entry |a - n| / max(|a|, |n|); dominated by truncation on near-zero entries."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), GRAD_FLOOR)
    return np.abs(analytic - numeric) / denom


def kink_signature(pp: PairPass) -> bytes:
    """Max-pool winners and clamp pattern; finite differences are only valid if these stay put."""
    parts = []
    for role, cache in ((SOURCE, pp.caches[0]), (TARGET, pp.caches[1])):
        parts.append(cache[0][1].tobytes())
        p = sigmoid(pp.logits[role])
        parts.append(((p > PRED_CLAMP) & (p < 1.0 - PRED_CLAMP)).tobytes())
    return b"".join(parts)


def random_problem(cfg: ModelConfig, n_points: int = 64, seed: int = 0):
    """Two random normalized clouds with soft labels on channel 0."""
    rng = np.random.default_rng(seed)
    geos, gts = [], []
    for _ in (SOURCE, TARGET):
        pts = rng.standard_normal((n_points, 3)) * np.array([1.0, 0.7, 0.5])
        feats = rng.standard_normal((n_points, cfg.feature_dim))
        cloud, _ = normalize_cloud(FeatureCloud(pts, feats))
        geos.append(prepare(cloud, cfg))
        gts.append(rng.random(n_points))
    return geos, gts


def grad_check(
    cfg: Optional[ModelConfig] = None,
    n_points: int = 64,
    seed: int = 0,
    h: float = 1e-3,
    max_entries: Optional[int] = 64,
    tensors: Optional[list] = None,
) -> GradCheckReport:
    """Central differences against the backward pass for every parameter tensor.

    ``max_entries`` caps the entries probed per tensor (random subset plus the
    entry with the largest analytic gradient); ``None`` probes all of them.
    Probes whose +-h evaluations move a max-pool winner or the probability
    clamp cross a kink, so they are counted in ``kinks_skipped`` instead.
    ``max_rel_error`` is the worst norm-wise error over tensors;
    ``max_entry_error`` keeps the stricter per-entry figure for reference.
    """
    cfg = cfg or ModelConfig.small()
    if cfg.dtype != "float64":
        cfg = cfg.replace(dtype="float64")
    cfg = cfg.replace(dropout=0.0)
    start = time.perf_counter()
    params = init_params(cfg, seed)
    (gs, gt), gts = random_problem(cfg, n_points, seed)
    loss, grads = loss_and_grads(gs, gt, gts, 0, params, cfg)

    base_sig = kink_signature(forward_geo(gs, gt, params, cfg))

    def f():
        pp = forward_geo(gs, gt, params, cfg)
        return pair_loss(pp, gts, 0), kink_signature(pp) == base_sig

    rng = np.random.default_rng(seed + 1)
    report = GradCheckReport(0.0, loss=loss)
    for name in tensors or list(params):
        p = params[name]
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            idx = np.arange(flat.size)
        else:
            idx = np.unique(np.append(rng.choice(flat.size, max_entries - 1, replace=False), np.argmax(np.abs(g))))
        num = np.empty(len(idx))
        smooth = np.ones(len(idx), dtype=bool)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            up, ok_up = f()
            flat[i] = old - h
            down, ok_down = f()
            flat[i] = old
            num[j] = (up - down) / (2.0 * h)
            smooth[j] = ok_up and ok_down
        err = relative_error(g[idx][smooth], num[smooth])
        entry = entry_errors(g[idx][smooth], num[smooth])
        report.per_tensor[name] = err
        report.max_entry_error = max(report.max_entry_error, float(entry.max()) if entry.size else 0.0)
        report.entries_checked += int(smooth.sum())
        report.kinks_skipped += int((~smooth).sum())
        report.max_rel_error = max(report.max_rel_error, err)
    report.seconds = time.perf_counter() - start
    return report
