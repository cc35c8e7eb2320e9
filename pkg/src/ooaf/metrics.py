"""Affordance map metrics (aIOU, SIM, MAE, AUC) and batch evaluation reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

GT_THRESHOLD = 0.5
THRESHOLDS = np.arange(1, 100) / 100.0
METRIC_NAMES = ("aiou", "sim", "mae", "auc")


class UndefinedMetricError(ValueError):
    pass


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} vs {gt.shape[0]}")
    return pred, gt


def aiou(pred, gt, thresholds: np.ndarray = THRESHOLDS, gt_threshold: float = GT_THRESHOLD) -> float:
    """Mean IoU of ``pred > t`` against ``gt >= 0.5`` over the threshold grid, in percent."""
    pred, gt = _pair(pred, gt)
    g = gt >= gt_threshold
    p = pred[None, :] > np.asarray(thresholds, dtype=np.float64)[:, None]
    inter = (p & g).sum(axis=1)
    union = (p | g).sum(axis=1)
    iou = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return float(100.0 * iou.mean())


def sim(pred, gt) -> float:
    """Histogram intersection of the two maps after normalizing each to unit sum."""
    pred, gt = _pair(pred, gt)
    if np.any(pred < 0) or np.any(gt < 0):
        raise ValueError("similarity needs non-negative maps")
    sp, sg = pred.sum(), gt.sum()
    if sp <= 0 or sg <= 0:
        raise UndefinedMetricError("undefined similarity: all-zero map")
    return float(np.minimum(pred / sp, gt / sg).sum())


def mae(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    return float(np.abs(pred - gt).mean())


def auc(pred, gt, gt_threshold: float = GT_THRESHOLD) -> float:
    """Mann-Whitney AUC with average ranks for ties, in percent."""
    pred, gt = _pair(pred, gt)
    pos = gt >= gt_threshold
    n1 = int(pos.sum())
    n0 = len(pos) - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedMetricError("AUC undefined: ground truth has a single class")
    ranks = rankdata(pred, method="average")
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(100.0 * u / (n1 * n0))


def map_metrics(pred, gt) -> dict:
    """All four metrics for one map; undefined SIM/AUC become NaN."""
    out = {"aiou": aiou(pred, gt), "mae": mae(pred, gt)}
    for name, fn in (("sim", sim), ("auc", auc)):
        try:
            out[name] = fn(pred, gt)
        except UndefinedMetricError:
            out[name] = math.nan
    return {k: out[k] for k in METRIC_NAMES}


@dataclass
class MetricReport:
    aiou: float
    sim: float
    mae: float
    auc: float
    samples: list = field(default_factory=list)  # per-sample dicts
    per_category: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "aiou": self.aiou,
            "sim": self.sim,
            "mae": self.mae,
            "auc": self.auc,
            "per_category": self.per_category,
            "samples": self.samples,
        }

    def to_json(self) -> str:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, list):
                return [clean(v) for v in x]
            return x

        return json.dumps(clean(self.as_dict()), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [("category", "IOU", "SIM", "MAE", "AUC")]
        for name, m in self.per_category.items():
            rows.append((name, f"{m['aiou']:.2f}", f"{m['sim']:.3f}", f"{m['mae']:.3f}", f"{m['auc']:.2f}"))
        rows.append(("mean", f"{self.aiou:.2f}", f"{self.sim:.3f}", f"{self.mae:.3f}", f"{self.auc:.2f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = []
        for r in rows:
            lines.append("  ".join(r[0].ljust(widths[0]) if i == 0 else r[i].rjust(widths[i]) for i in range(5)))
        return "\n".join(lines)


def _nanmean(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else math.nan


def summarize(samples: Sequence[dict]) -> MetricReport:
    """Macro average: objects within a sample, samples within a category, then categories.

    Each sample dict carries ``category`` plus ``source`` and ``target`` metric dicts.
    """
    if not samples:
        raise ValueError("empty eval set")
    by_cat: dict = {}
    rows = []
    for s in samples:
        row = {"category": s["category"], "name": s.get("name", "")}
        for m in METRIC_NAMES:
            row[m] = _nanmean([s["source"][m], s["target"][m]])
        row["source"] = dict(s["source"])
        row["target"] = dict(s["target"])
        rows.append(row)
        by_cat.setdefault(s["category"], []).append(row)
    per_cat = {c: {m: _nanmean([r[m] for r in rs]) for m in METRIC_NAMES} for c, rs in by_cat.items()}
    per_cat = dict(sorted(per_cat.items()))
    overall = {m: _nanmean([v[m] for v in per_cat.values()]) for m in METRIC_NAMES}
    return MetricReport(overall["aiou"], overall["sim"], overall["mae"], overall["auc"], rows, per_cat)


def evaluate_maps(items: Sequence[tuple]) -> MetricReport:
    """``items`` are (category name, (pred_src, gt_src), (pred_tgt, gt_tgt)[, name]) tuples."""
    samples = []
    for item in items:
        cat, (ps, gs), (pt, gt) = item[:3]
        samples.append(
            {
                "category": cat,
                "name": item[3] if len(item) > 3 else "",
                "source": map_metrics(ps, gs),
                "target": map_metrics(pt, gt),
            }
        )
    return summarize(samples)


def evaluate(data, params, cfg, names: Optional[Sequence[str]] = None) -> MetricReport:
    """Forward every eval pair and score its own category channel.

    ``data`` is a :class:`~ooaf.data.DatasetManifest` (its eval split is used)
    or a sequence of pairs.
    """
    from .data import DatasetManifest
    from .model.network import forward

    if isinstance(data, DatasetManifest):
        pairs = data.eval_pairs()
        # <category>/eval/<id>, independent of where the dataset lives
        names = [s.src.parent.relative_to(s.src.parents[3]).as_posix() for c in data.categories for s in data.eval.get(c.id, [])]
    else:
        pairs = list(data)
    if not pairs:
        raise ValueError("empty eval set")
    items = []
    for i, pair in enumerate(pairs):
        ch = pair.category.id
        ps, pt = forward(pair, params, cfg)
        items.append(
            (
                pair.category.name,
                (ps[:, ch], pair.source.affordance[:, ch]),
                (pt[:, ch], pair.target.affordance[:, ch]),
                names[i] if names else str(i),
            )
        )
    return evaluate_maps(items)
