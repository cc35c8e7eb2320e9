"""One-shot training loop: Adam over the K training pairs in fixed category order."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..core import FeatureCloud, ObjectPair, normalize_pair
from ..data import DatasetManifest
from .config import ModelConfig
from .network import Params, init_params, loss_and_grads, prepare


class TrainingError(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass
class Adam:
    lr: float
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: Params, grads: Params) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


@dataclass
class TrainResult:
    params: Params
    history: list  # one loss per (epoch, sample)
    config: ModelConfig
    seconds: float = 0.0

    def epoch_losses(self) -> np.ndarray:
        k = max(1, len(self.history) // max(1, self.config.epochs))
        return np.asarray(self.history, dtype=np.float64).reshape(-1, k).mean(axis=1)


def rotate_z(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return points @ rot.T


def augment_pair(pair: ObjectPair, rng: np.random.Generator, jitter: float) -> ObjectPair:
    """Same random z-rotation for both (normalized) objects, independent Gaussian jitter per point."""
    angle = rng.uniform(0.0, 2.0 * math.pi)
    out = []
    for cloud in (pair.source, pair.target):
        pts = rotate_z(cloud.points, angle)
        if jitter > 0:
            pts = pts + rng.normal(0.0, jitter, size=pts.shape)
        out.append(cloud.with_points(pts))
    return ObjectPair(out[0], out[1], pair.category)


def _targets(pair: ObjectPair, channel: int):
    gts = []
    for cloud in (pair.source, pair.target):
        if cloud.affordance is None or channel >= cloud.num_channels:
            raise ValueError(f"training pair {pair.category.name!r} has no labels on channel {channel}")
        gts.append(np.asarray(cloud.affordance[:, channel], dtype=np.float64))
    return gts


def _training_pairs(data) -> list[ObjectPair]:
    if isinstance(data, DatasetManifest):
        return data.train_pairs()
    pairs = list(data)
    if not pairs:
        raise ValueError("no training pairs")
    return pairs


def train_one_shot(
    data: Union[DatasetManifest, Sequence[ObjectPair]],
    cfg: ModelConfig,
    params: Optional[Params] = None,
    callback: Optional[Callable[[int, int, float], None]] = None,
) -> TrainResult:
    """Fit the network on one pair per category.

    Each epoch visits the pairs in category-id order and takes one Adam step
    per pair. The loss of a pair is the mean BCE of the source and target maps
    on the pair's own category channel; other channels are left unsupervised.
    ``callback(epoch, sample, loss)`` is called after every step.
    """
    pairs = sorted(_training_pairs(data), key=lambda p: p.category.id)
    for p in pairs:
        if p.source.feature_dim != cfg.feature_dim:
            raise ValueError(f"feature dimension {p.source.feature_dim} does not match config {cfg.feature_dim}")
        if p.category.id >= cfg.num_channels:
            raise ValueError(f"category id {p.category.id} exceeds num_channels {cfg.num_channels}")
    start = time.perf_counter()
    dtype = np.dtype(cfg.dtype)
    params = init_params(cfg) if params is None else {k: v.astype(dtype, copy=True) for k, v in params.items()}
    rng = np.random.default_rng(cfg.seed + 1)
    opt = Adam(cfg.lr, cfg.betas, cfg.adam_eps)

    normed = [normalize_pair(p)[0] for p in pairs]
    targets = [_targets(p, p.category.id) for p in normed]
    fixed = None if cfg.augment else [(prepare(p.source, cfg), prepare(p.target, cfg)) for p in normed]
    drop_rng = rng if cfg.dropout > 0 else None

    history = []
    for epoch in range(cfg.epochs):
        for i, pair in enumerate(normed):
            if fixed is None:
                aug = augment_pair(pair, rng, cfg.jitter)
                gs, gt = prepare(aug.source, cfg), prepare(aug.target, cfg)
            else:
                gs, gt = fixed[i]
            loss, grads = loss_and_grads(gs, gt, targets[i], pair.category.id, params, cfg, drop_rng)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch} (sample {pair.category.name!r})")
            opt.step(params, grads)
            history.append(loss)
            if callback is not None:
                callback(epoch, i, loss)
    return TrainResult(params, history, cfg, time.perf_counter() - start)


def smoothed(values: Sequence[float], window: int = 10) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        return v.copy()
    return np.convolve(v, np.ones(window) / window, mode="valid")
