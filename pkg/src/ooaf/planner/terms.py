"""Geometric constraint terms over a candidate source pose. Every score is >= 0, lower is better."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from ..core import GRAVITY, FeatureCloud, RigidTransform
from .spec import ConstraintSpec, ConstraintTerm

REGION_THRESHOLD = 0.5
REGION_MIN = 10
REGION_FALLBACK = 50
RANK_TOL = 1e-12


class DegenerateRegionError(ValueError):
    pass


def high_affordance_region(cloud: FeatureCloud, channel: int):
    """(points, weights): points with a >= 0.5, or the top 50 by a when fewer than 10 qualify."""
    if cloud.affordance is None or channel >= cloud.num_channels:
        raise ValueError(f"cloud has no affordance channel {channel}")
    a = cloud.affordance[:, channel]
    if not np.any(a > 0):
        raise DegenerateRegionError("no functional region: affordance is all zero")
    idx = np.flatnonzero(a >= REGION_THRESHOLD)
    if len(idx) < REGION_MIN:
        order = np.argsort(-a, kind="stable")
        idx = np.sort(order[:REGION_FALLBACK])
    return cloud.points[idx], a[idx]


def weighted_centroid(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return (weights[:, None] * points).sum(axis=0) / weights.sum()


def _weighted_pca(points, weights, need_rank: int, what: str):
    """Eigenvalues (descending) and matching eigenvectors of the weighted covariance."""
    c = weighted_centroid(points, weights)
    x = points - c
    cov = (weights[:, None] * x).T @ x / weights.sum()
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    top = max(vals[0], 0.0)
    rank = int(np.sum(vals > RANK_TOL * max(top, 1e-300))) if top > 0 else 0
    if rank < need_rank:
        raise DegenerateRegionError(f"{what}: degenerate PCA (rank {rank} < {need_rank})")
    return vals, vecs


def _angle_deg(u, v) -> float:
    c = abs(float(np.dot(u, v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.degrees(math.acos(min(1.0, c)))


class Scene:
    """Source/target clouds with cached regions, trees and target-only quantities."""

    def __init__(self, src: FeatureCloud, tgt: FeatureCloud, channel: int):
        self.src, self.tgt, self.channel = src, tgt, channel
        self.src_a = src.affordance[:, channel] if src.affordance is not None else None
        self.src_region, self.src_w = high_affordance_region(src, channel)
        self.tgt_region, self.tgt_w = high_affordance_region(tgt, channel)
        self.tgt_centroid = weighted_centroid(self.tgt_region, self.tgt_w)
        self.src_centroid = weighted_centroid(self.src_region, self.src_w)
        self.tgt_tree = cKDTree(tgt.points)
        self.tgt_region_tree = cKDTree(self.tgt_region)
        self._normal = None
        self._axis = None

    @property
    def tgt_normal(self) -> np.ndarray:
        if self._normal is None:
            _, vecs = _weighted_pca(self.tgt_region, self.tgt_w, 2, "perpendicular")
            self._normal = vecs[:, 2]
        return self._normal

    def src_axis(self, t: RigidTransform, what: str) -> np.ndarray:
        # the principal axis of t*src is the rotated axis of src
        if self._axis is None:
            _, vecs = _weighted_pca(self.src.points, self.src_a, 1, what)
            self._axis = vecs[:, 0]
        return t.rotation @ self._axis

    def score(self, term: ConstraintTerm, t: RigidTransform) -> float:
        kind, p = term.type, term.params
        gravity = np.asarray(GRAVITY, dtype=np.float64)
        if kind == "affordance_alignment":
            moved = t.apply(self.src_region)
            return float(np.linalg.norm(weighted_centroid(moved, self.src_w) - self.tgt_centroid))
        if kind == "position_above":
            cs = weighted_centroid(t.apply(self.src_region), self.src_w)
            ct = self.tgt_centroid
            return float(max(0.0, ct[2] + p["delta"] - cs[2]) + np.linalg.norm(cs[:2] - ct[:2]))
        if kind == "orientation_tilt":
            ang = _angle_deg(self.src_axis(t, "orientation_tilt"), gravity)
            lo, hi = p["min_deg"], p["max_deg"]
            return float(max(0.0, lo - ang, ang - hi) / 90.0)
        if kind == "clearance":
            d, _ = self.tgt_tree.query(t.apply(self.src.points))
            return float(max(0.0, p["d_min"] - d.min()) / p["d_min"])
        if kind == "contact_quality":
            d, _ = self.tgt_region_tree.query(t.apply(self.src_region))
            return float(d.mean())
        if kind == "stability":
            com = t.apply(self.src.points).mean(axis=0)
            return float(max(0.0, com[2] - self.tgt_region[:, 2].max()))
        if kind == "perpendicular":
            axis = self.src_axis(t, "perpendicular")
            n = self.tgt_normal
            return float(1.0 - abs(np.dot(axis, n)) / (np.linalg.norm(axis) * np.linalg.norm(n)))
        if kind == "containment":
            lo = self.tgt_region.min(axis=0) - p["margin"]
            hi = self.tgt_region.max(axis=0) + p["margin"]
            moved = t.apply(self.src_region)
            inside = np.all((moved >= lo) & (moved <= hi), axis=1)
            return float(1.0 - inside.mean())
        if kind == "collision":
            d, _ = self.tgt_tree.query(t.apply(self.src.points))
            r = p["r_pen"]
            return float(np.mean(np.maximum(0.0, r - d) ** 2) / (r * r))
        raise ValueError(f"unknown term type {kind!r}")

    def objective(self, spec: ConstraintSpec, t: RigidTransform):
        scores = [self.score(term, t) for term in spec.terms]
        total = float(sum(term.weight * s for term, s in zip(spec.terms, scores)))
        return total, scores


def eval_term(term: ConstraintTerm, src: FeatureCloud, tgt: FeatureCloud, channel: int, t: RigidTransform, scene: Optional[Scene] = None) -> float:
    scene = scene or Scene(src, tgt, channel)
    return scene.score(term, t)


def objective(spec: ConstraintSpec, src: FeatureCloud, tgt: FeatureCloud, channel: int, t: RigidTransform):
    """(total, per-term scores in spec order) with total = sum of weight * score."""
    return Scene(src, tgt, channel).objective(spec, t)
