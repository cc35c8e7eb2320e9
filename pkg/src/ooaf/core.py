"""Domain types, SE(3) helpers, per-object normalization and the OOAF-PC cloud format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

# World gravity points along -z; position_above / stability / tilt terms rely on it.
GRAVITY = np.array([0.0, 0.0, -1.0])

CATEGORY_NAMES = ("pour", "hang", "press", "insert", "cut")

SAVE_DIGITS = 9


class CloudFormatError(ValueError):
    """Malformed OOAF-PC file; the message names the offending line."""


class DegenerateCloudError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureCloud:
    points: np.ndarray
    features: np.ndarray
    affordance: Optional[np.ndarray] = None
    part_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be N x 3, got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("N must be >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinates")
        feats = np.asarray(self.features)
        if feats.ndim == 1 and feats.size == 0:
            feats = np.zeros((pts.shape[0], 0))
        if feats.ndim != 2 or feats.shape[0] != pts.shape[0]:
            raise ValueError(f"features must be N x n, got {feats.shape}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "features", feats)
        if self.affordance is not None:
            aff = np.asarray(self.affordance, dtype=np.float64)
            if aff.ndim == 1:
                aff = aff[:, None]
            if aff.shape[0] != pts.shape[0]:
                raise ValueError("affordance row count differs from N")
            if not np.all((aff >= 0.0) & (aff <= 1.0)):
                raise ValueError("affordance values must lie in [0, 1]")
            object.__setattr__(self, "affordance", aff)
        if self.part_labels is not None:
            parts = np.asarray(self.part_labels, dtype=np.int64)
            if parts.shape != (pts.shape[0],):
                raise ValueError("part_labels must have one entry per point")
            object.__setattr__(self, "part_labels", parts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_channels(self) -> int:
        return 0 if self.affordance is None else self.affordance.shape[1]

    def subset(self, idx) -> "FeatureCloud":
        idx = np.asarray(idx)
        return FeatureCloud(
            self.points[idx],
            self.features[idx],
            None if self.affordance is None else self.affordance[idx],
            None if self.part_labels is None else self.part_labels[idx],
        )

    def with_points(self, points) -> "FeatureCloud":
        return replace(self, points=points)


@dataclass(frozen=True)
class AffordanceCategory:
    id: int
    name: str


def default_categories() -> list[AffordanceCategory]:
    return [AffordanceCategory(i, name) for i, name in enumerate(CATEGORY_NAMES)]


def category_by_name(name: str) -> AffordanceCategory:
    if name not in CATEGORY_NAMES:
        raise ValueError(f"unknown category {name!r}")
    return AffordanceCategory(CATEGORY_NAMES.index(name), name)


@dataclass(frozen=True)
class ObjectPair:
    source: FeatureCloud
    target: FeatureCloud
    category: AffordanceCategory

    def __post_init__(self):
        if self.source.feature_dim != self.target.feature_dim:
            raise ValueError(
                f"feature dimension mismatch: {self.source.feature_dim} vs {self.target.feature_dim}"
            )


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_valid(self, tol: float = 1e-9) -> bool:
        r = self.rotation
        return bool(
            np.max(np.abs(r.T @ r - np.eye(3))) < tol and abs(np.linalg.det(r) - 1.0) < tol
        )


def compose(t2: RigidTransform, t1: RigidTransform) -> RigidTransform:
    """Transform equivalent to applying ``t1`` first, then ``t2``."""
    return RigidTransform(t2.rotation @ t1.rotation, t2.rotation @ t1.translation + t2.translation)


def se3_apply(t: RigidTransform, cloud: FeatureCloud) -> FeatureCloud:
    return cloud.with_points(t.apply(cloud.points))


def _wrap_rotvec(omega: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(omega))
    if theta <= math.pi:
        return omega
    axis = omega / theta
    theta = math.fmod(theta, 2.0 * math.pi)
    if theta > math.pi:
        theta -= 2.0 * math.pi
    return axis * theta


def rodrigues(omega) -> np.ndarray:
    omega = _wrap_rotvec(np.asarray(omega, dtype=np.float64).reshape(3))
    theta = float(np.linalg.norm(omega))
    wx = np.array(
        [
            [0.0, -omega[2], omega[1]],
            [omega[2], 0.0, -omega[0]],
            [-omega[1], omega[0], 0.0],
        ]
    )
    if theta < 1e-12:
        # second-order Taylor expansion of the exponential map
        return np.eye(3) + wx + 0.5 * wx @ wx
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * wx + b * wx @ wx


def se3_from_params(p) -> RigidTransform:
    """Map (axis-angle, translation) to a rigid transform."""
    p = np.asarray(p, dtype=np.float64).reshape(6)
    return RigidTransform(rodrigues(p[:3]), p[3:].copy())


def se3_to_params(t: RigidTransform) -> np.ndarray:
    omega = Rotation.from_matrix(t.rotation).as_rotvec()
    return np.concatenate([_wrap_rotvec(omega), t.translation])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform rotation on SO(3) from a unit quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return Rotation.from_quat(q).as_matrix()


def rotation_angle_deg(r_a: np.ndarray, r_b: np.ndarray) -> float:
    c = (np.trace(r_a.T @ r_b) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


@dataclass(frozen=True)
class NormRecord:
    """Centroid offset and radius used to map a cloud into the unit ball."""

    offset: np.ndarray
    scale: float


def normalize_cloud(cloud: FeatureCloud) -> tuple[FeatureCloud, NormRecord]:
    offset = cloud.points.mean(axis=0)
    centered = cloud.points - offset
    radius = float(np.sqrt((centered * centered).sum(axis=1)).max())
    if radius <= 0.0 or not np.isfinite(radius):
        raise DegenerateCloudError("zero extent")
    return cloud.with_points(centered / radius), NormRecord(offset, radius)


def denormalize_cloud(cloud: FeatureCloud, record: NormRecord) -> FeatureCloud:
    return cloud.with_points(cloud.points * record.scale + record.offset)


def normalize_pair(pair: ObjectPair) -> tuple[ObjectPair, tuple[NormRecord, NormRecord]]:
    src, rec_s = normalize_cloud(pair.source)
    tgt, rec_t = normalize_cloud(pair.target)
    return ObjectPair(src, tgt, pair.category), (rec_s, rec_t)


# ---------------------------------------------------------------------------
# OOAF-PC v1 text format


def _fmt(x: float) -> str:
    return format(float(x), f".{SAVE_DIGITS}g")


def save_cloud(cloud: FeatureCloud, path) -> None:
    n = cloud.feature_dim
    k = cloud.num_channels
    lines = [f"ooaf-pc 1 {len(cloud)} {n} {k}"]
    if cloud.part_labels is not None:
        lines.append("parts 1")
    cols = [cloud.points, cloud.features]
    if k:
        cols.append(cloud.affordance)
    table = np.hstack([np.asarray(c, dtype=np.float64) for c in cols])
    for i, row in enumerate(table):
        text = " ".join(_fmt(v) for v in row)
        if cloud.part_labels is not None:
            text += f" {int(cloud.part_labels[i])}"
        lines.append(text)
    Path(path).write_text("\n".join(lines) + "\n")


def load_cloud(path) -> FeatureCloud:
    raw = Path(path).read_text().splitlines()
    if not raw:
        raise CloudFormatError("line 1: empty file")
    head = raw[0].split()
    if len(head) != 5 or head[0] != "ooaf-pc" or head[1] != "1":
        raise CloudFormatError(f"line 1: malformed header {raw[0]!r}")
    try:
        n_pts, n_feat, n_aff = (int(v) for v in head[2:])
    except ValueError:
        raise CloudFormatError(f"line 1: malformed header {raw[0]!r}") from None
    if n_pts < 1:
        raise CloudFormatError("line 1: N must be ≥ 1")
    if n_feat < 0 or n_aff < 0:
        raise CloudFormatError("line 1: negative column count")
    start = 1
    has_parts = False
    if len(raw) > 1 and raw[1].split()[:1] == ["parts"]:
        if raw[1].split() != ["parts", "1"]:
            raise CloudFormatError(f"line 2: malformed parts flag {raw[1]!r}")
        has_parts = True
        start = 2
    rows = [ln for ln in raw[start:]]
    while rows and not rows[-1].strip():
        rows.pop()
    if len(rows) != n_pts:
        raise CloudFormatError(
            f"line {start + len(rows) + 1}: row count mismatch, header declares {n_pts}, found {len(rows)}"
        )
    width = 3 + n_feat + n_aff + (1 if has_parts else 0)
    table = np.empty((n_pts, 3 + n_feat + n_aff))
    parts = np.empty(n_pts, dtype=np.int64) if has_parts else None
    for i, line in enumerate(rows):
        lineno = start + i + 1
        toks = line.split()
        if len(toks) != width:
            raise CloudFormatError(f"line {lineno}: expected {width} values, found {len(toks)}")
        try:
            vals = [float(t) for t in toks[: 3 + n_feat + n_aff]]
            if has_parts:
                parts[i] = int(toks[-1])
        except ValueError:
            raise CloudFormatError(f"line {lineno}: unparsable value") from None
        if not all(math.isfinite(v) for v in vals):
            raise CloudFormatError(f"line {lineno}: non-finite value")
        table[i] = vals
        if n_aff:
            aff = table[i, 3 + n_feat :]
            if np.any(aff < 0.0) or np.any(aff > 1.0):
                raise CloudFormatError(f"line {lineno}: affordance value outside [0, 1]")
    return FeatureCloud(
        table[:, :3],
        table[:, 3 : 3 + n_feat],
        table[:, 3 + n_feat :] if n_aff else None,
        parts,
    )

