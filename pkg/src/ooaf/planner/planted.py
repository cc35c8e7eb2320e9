"""Planted-optimum pose tasks: the target is a rigidly moved copy of the source."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import FeatureCloud, RigidTransform, normalize_cloud, random_rotation, rotation_angle_deg
from ..data import generate_pair
from .spec import ConstraintSpec, ConstraintTerm


@dataclass(frozen=True)
class PlantedTask:
    spec: ConstraintSpec
    source: FeatureCloud
    target: FeatureCloud
    channel: int
    truth: RigidTransform


def planted_alignment_task(seed: int, category: str = "hang", n_points: int = 512, max_shift: float = 0.5) -> PlantedTask:
    """Normalized source object with ground-truth labels; target = T* applied to it.

    Alignment plus contact quality is zero exactly at T*; the functional
    region of the default category (a mug handle arc) has no rotational
    symmetry, so the optimum is isolated.
    """
    rng = np.random.default_rng([seed, 97])
    pair = generate_pair(category, seed, 0.3, n_points)
    src, _ = normalize_cloud(pair.source)
    truth = RigidTransform(random_rotation(rng), rng.uniform(-max_shift, max_shift, size=3))
    tgt = src.with_points(truth.apply(src.points))
    spec = ConstraintSpec(
        "planted",
        (ConstraintTerm("affordance_alignment", 1.0), ConstraintTerm("contact_quality", 1.0)),
    )
    return PlantedTask(spec, src, tgt, pair.category.id, truth)


def pose_errors(found: RigidTransform, truth: RigidTransform) -> tuple[float, float]:
    """(translation error, rotation error in degrees)."""
    return float(np.linalg.norm(found.translation - truth.translation)), rotation_angle_deg(found.rotation, truth.rotation)
