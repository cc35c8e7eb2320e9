"""Multi-start Nelder-Mead search over source poses."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from ..core import FeatureCloud, RigidTransform, random_rotation, rodrigues
from .spec import ConstraintSpec
from .terms import Scene


@dataclass(frozen=True)
class SolveOptions:
    restarts: int = 32
    max_iter: int = 500
    seed: int = 0
    init_sigma: float = 0.05
    rot_step: float = 0.1
    trans_step: float = 0.02
    ftol: float = 1e-8
    workers: int = 1

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class OptimizationResult:
    transform: RigidTransform
    total_score: float
    term_scores: list
    restarts_run: int
    best_restart_index: int
    restart_scores: list = field(default_factory=list)


def params_to_transform(x: np.ndarray, pivot: np.ndarray) -> RigidTransform:
    """Rotation vector x[:3] about ``pivot``, then translation x[3:]."""
    rot = rodrigues(x[:3])
    return RigidTransform(rot, pivot + x[3:] - rot @ pivot)


def _starts(scene: Scene, opts: SolveOptions) -> list:
    rng = np.random.default_rng(opts.seed)
    shift = scene.tgt_centroid - scene.src_centroid
    starts = [np.zeros(6)]
    for _ in range(1, opts.restarts):
        rotvec = Rotation.from_matrix(random_rotation(rng)).as_rotvec()
        trans = shift + rng.normal(0.0, opts.init_sigma, size=3)
        starts.append(np.concatenate([rotvec, trans]))
    return starts


def _run(scene: Scene, spec: ConstraintSpec, x0: np.ndarray, opts: SolveOptions):
    pivot = scene.src_centroid

    def f(x):
        total, _ = scene.objective(spec, params_to_transform(x, pivot))
        if not math.isfinite(total):
            raise FloatingPointError("non-finite score")
        return total

    simplex = np.tile(x0, (7, 1))
    steps = [opts.rot_step] * 3 + [opts.trans_step] * 3
    for i, s in enumerate(steps):
        simplex[i + 1, i] += s
    try:
        res = minimize(
            f,
            x0,
            method="Nelder-Mead",
            options={"initial_simplex": simplex, "maxiter": opts.max_iter, "xatol": np.inf, "fatol": opts.ftol},
        )
    except FloatingPointError:
        return None
    return np.asarray(res.x, dtype=np.float64), float(res.fun)


def solve(
    spec: ConstraintSpec,
    src: FeatureCloud,
    tgt: FeatureCloud,
    channel: int,
    options: Optional[SolveOptions] = None,
) -> OptimizationResult:
    """Lowest-scoring source pose over seeded restarts; ties go to the lowest restart index.

    Restart 0 starts at the identity. Every other restart starts from a
    uniformly random rotation about the source-region centroid, with that
    centroid moved onto the target-region centroid plus Gaussian noise. A
    restart whose score turns non-finite is dropped.
    """
    opts = options or SolveOptions()
    scene = Scene(src, tgt, channel)
    starts = _starts(scene, opts)
    if opts.workers > 1:
        with ThreadPoolExecutor(opts.workers) as pool:
            runs = list(pool.map(lambda x0: _run(scene, spec, x0, opts), starts))
    else:
        runs = [_run(scene, spec, x0, opts) for x0 in starts]
    best, best_i = None, -1
    scores = []
    for i, r in enumerate(runs):
        scores.append(math.nan if r is None else r[1])
        if r is not None and (best is None or r[1] < best[1]):
            best, best_i = r, i
    if best is None:
        raise RuntimeError("every restart produced a non-finite score")
    t = params_to_transform(best[0], scene.src_centroid)
    total, terms = scene.objective(spec, t)
    return OptimizationResult(t, total, terms, len(runs), best_i, scores)
