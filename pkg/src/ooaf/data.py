"""Annotation, procedural object pairs, stand-in features, occlusion and dataset layout."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    CATEGORY_NAMES,
    AffordanceCategory,
    FeatureCloud,
    ObjectPair,
    category_by_name,
    load_cloud,
    save_cloud,
)

DEFAULT_SIGMA = 0.06
# generated pairs use a tighter bandwidth so the labels stay near-binary at N = 512
GENERATOR_SIGMA = 0.03
DEFAULT_N = 2048
LABEL_FLOOR = 1e-4


class ManifestError(ValueError):
    pass


class OcclusionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ContactAnnotation:
    contact_points: np.ndarray
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        pts = np.asarray(self.contact_points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "contact_points", pts)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def check_on_cloud(self, cloud: FeatureCloud, tol: float = 1e-6) -> None:
        for c in self.contact_points:
            if np.min(np.linalg.norm(cloud.points - c, axis=1)) > tol:
                raise ValueError(f"contact point {c.tolist()} is not on the cloud")


def propagation_values(points: np.ndarray, contacts: np.ndarray, sigma: float) -> np.ndarray:
    """Max over contacts of a Gaussian in distance; tiny values snap to 0."""
    contacts = np.asarray(contacts, dtype=np.float64).reshape(-1, 3)
    if len(contacts) == 0:
        raise ValueError("contact list is empty")
    best = np.full(points.shape[0], np.inf)
    for c in contacts:
        d2 = ((points - c) ** 2).sum(axis=1)
        np.minimum(best, d2, out=best)
    vals = np.exp(-best / (2.0 * sigma * sigma))
    vals[vals < LABEL_FLOOR] = 0.0
    return vals


def propagate_labels(
    cloud: FeatureCloud, ann: ContactAnnotation, channel: AffordanceCategory | int
) -> FeatureCloud:
    if len(ann.contact_points) == 0:
        raise ValueError("contact list is empty")
    ch = channel.id if isinstance(channel, AffordanceCategory) else int(channel)
    if cloud.affordance is None or cloud.num_channels <= ch:
        raise ValueError(f"cloud has no affordance channel {ch} allocated")
    aff = cloud.affordance.copy()
    aff[:, ch] = propagation_values(cloud.points, ann.contact_points, ann.sigma)
    return FeatureCloud(cloud.points, cloud.features, aff, cloud.part_labels)


# ---------------------------------------------------------------------------
# primitive surface samplers; every sampler takes (params, count, rng)


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def _frame(axis):
    a = _unit(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b = _unit(np.cross(a, helper))
    c = np.cross(a, b)
    return a, b, c


def _sphere(p, n, rng):
    zmax = p.get("zmax")
    out = np.empty((0, 3))
    while len(out) < n:
        v = rng.standard_normal((max(n, 16), 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        if zmax is not None:
            v = v[v[:, 2] <= zmax]
        out = np.vstack([out, v])
    return np.asarray(p["center"]) + p["radius"] * out[:n]


def _sphere_area(p):
    area = 4 * math.pi * p["radius"] ** 2
    if p.get("zmax") is not None:
        area *= (1 + p["zmax"]) / 2.0
    return area


def _cylinder(p, n, rng):
    p0, p1 = np.asarray(p["p0"], float), np.asarray(p["p1"], float)
    axis = p1 - p0
    length = np.linalg.norm(axis)
    a, b, c = _frame(axis)
    r = p["radius"]
    side = 2 * math.pi * r * length
    cap = math.pi * r * r if p.get("caps", True) else 0.0
    kind = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
    t = rng.random(n)
    th = rng.random(n) * 2 * math.pi
    rad = np.where(kind == 0, r, r * np.sqrt(rng.random(n)))
    h = np.where(kind == 0, t * length, np.where(kind == 1, 0.0, length))
    return p0 + np.outer(h, a) + np.outer(rad * np.cos(th), b) + np.outer(rad * np.sin(th), c)


def _cylinder_area(p):
    length = np.linalg.norm(np.asarray(p["p1"], float) - np.asarray(p["p0"], float))
    r = p["radius"]
    return 2 * math.pi * r * length + (2 * math.pi * r * r if p.get("caps", True) else 0.0)


def _box(p, n, rng):
    h = np.asarray(p["half"], float)
    areas = np.array([h[1] * h[2], h[1] * h[2], h[0] * h[2], h[0] * h[2], h[0] * h[1], h[0] * h[1]])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    uv = rng.random((n, 3)) * 2 - 1
    pts = uv * h
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    pts[np.arange(n), axis] = sign * h[axis]
    return np.asarray(p["center"], float) + pts


def _box_area(p):
    h = np.asarray(p["half"], float)
    return 8 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2])


def _torus_arc(p, n, rng):
    """Tube of radius r swept along an arc of radius R in the plane (u, w) around center."""
    c = np.asarray(p["center"], float)
    u, w = _unit(p["u"]), _unit(p["w"])
    normal = np.cross(u, w)
    a0, a1 = p["angles"]
    phi = a0 + rng.random(n) * (a1 - a0)
    psi = rng.random(n) * 2 * math.pi
    radial = np.outer(np.cos(phi), u) + np.outer(np.sin(phi), w)
    ring = c + p["R"] * radial
    return ring + p["r"] * (np.cos(psi)[:, None] * radial + np.sin(psi)[:, None] * normal)


def _torus_area(p):
    a0, a1 = p["angles"]
    return (a1 - a0) * p["R"] * 2 * math.pi * p["r"]


_SAMPLERS = {
    "sphere": (_sphere, _sphere_area),
    "cylinder": (_cylinder, _cylinder_area),
    "box": (_box, _box_area),
    "torus": (_torus_arc, _torus_area),
}

# Part vocabulary shared by every category; ids index the stand-in feature table.
PART_NAMES = (
    "pot_body",
    "spout",
    "handle",
    "bowl_wall",
    "bowl_rim",
    "cup_body",
    "pole",
    "base",
    "branch",
    "hammer_head",
    "box_body",
    "button",
    "bread",
    "crust",
    "toaster_body",
    "slot",
    "blade",
    "blade_edge",
    "fruit",
    "stem",
)
PART_ID = {name: i for i, name in enumerate(PART_NAMES)}


@dataclass(frozen=True)
class PartSpec:
    name: str
    kind: str
    params: dict
    anchor: tuple  # attachment point; per-part scaling is applied about it


@dataclass(frozen=True)
class ObjectSpec:
    parts: tuple
    functional_part: str
    # contacts are functional-part points within contact_radius of this point (None: whole part)
    contact_anchor: Optional[tuple] = None
    contact_radius: float = 0.15


def _objects(category: str) -> tuple[ObjectSpec, ObjectSpec]:
    if category == "pour":
        src = ObjectSpec(
            (
                PartSpec("pot_body", "sphere", {"center": (0, 0, 0), "radius": 0.5}, (0, 0, 0)),
                PartSpec(
                    "spout",
                    "cylinder",
                    {"p0": (0.35, 0, 0.05), "p1": (0.9, 0, 0.5), "radius": 0.12},
                    (0.35, 0, 0.05),
                ),
                PartSpec(
                    "handle",
                    "torus",
                    {"center": (-0.5, 0, 0.05), "u": (-1, 0, 0), "w": (0, 0, 1), "angles": (-1.4, 1.4), "R": 0.22, "r": 0.05},
                    (-0.5, 0, 0.05),
                ),
            ),
            "spout",
        )
        tgt = ObjectSpec(
            (
                PartSpec("bowl_wall", "sphere", {"center": (0, 0, 0), "radius": 0.6, "zmax": -0.05}, (0, 0, 0)),
                PartSpec(
                    "bowl_rim",
                    "torus",
                    {"center": (0, 0, -0.03), "u": (1, 0, 0), "w": (0, 1, 0), "angles": (0.0, 2 * math.pi), "R": 0.6, "r": 0.03},
                    (0, 0, 0),
                ),
            ),
            "bowl_wall",
            contact_anchor=(0, 0, -0.6),
            contact_radius=0.55,
        )
    elif category == "hang":
        src = ObjectSpec(
            (
                PartSpec("cup_body", "cylinder", {"p0": (0, 0, -0.4), "p1": (0, 0, 0.4), "radius": 0.35}, (0, 0, 0)),
                PartSpec(
                    "handle",
                    "torus",
                    {"center": (0.35, 0, 0), "u": (1, 0, 0), "w": (0, 0, 1), "angles": (-1.4, 1.4), "R": 0.25, "r": 0.07},
                    (0.35, 0, 0),
                ),
            ),
            "handle",
        )
        tgt = ObjectSpec(
            (
                PartSpec("pole", "cylinder", {"p0": (0, 0, -0.8), "p1": (0, 0, 0.8), "radius": 0.06}, (0, 0, -0.8)),
                PartSpec("base", "box", {"center": (0, 0, -0.85), "half": (0.4, 0.4, 0.05)}, (0, 0, -0.85)),
                PartSpec(
                    "branch",
                    "cylinder",
                    {"p0": (0.05, 0, 0.3), "p1": (0.6, 0, 0.6), "radius": 0.06},
                    (0.05, 0, 0.3),
                ),
            ),
            "branch",
        )
    elif category == "press":
        src = ObjectSpec(
            (
                PartSpec("handle", "cylinder", {"p0": (0, 0, -0.7), "p1": (0, 0, 0.4), "radius": 0.06}, (0, 0, 0.4)),
                PartSpec("hammer_head", "box", {"center": (0, 0, 0.5), "half": (0.35, 0.1, 0.1)}, (0, 0, 0.5)),
            ),
            "hammer_head",
            contact_anchor=(0.35, 0, 0.5),
            contact_radius=0.25,
        )
        tgt = ObjectSpec(
            (
                PartSpec("box_body", "box", {"center": (0, 0, -0.2), "half": (0.5, 0.5, 0.2)}, (0, 0, 0)),
                PartSpec("button", "cylinder", {"p0": (0, 0, 0), "p1": (0, 0, 0.12), "radius": 0.25}, (0, 0, 0)),
            ),
            "button",
        )
    elif category == "insert":
        src = ObjectSpec(
            (
                PartSpec("bread", "box", {"center": (0, 0, 0.08), "half": (0.45, 0.06, 0.42)}, (0, 0, -0.34)),
                PartSpec("crust", "box", {"center": (0, 0, -0.42), "half": (0.45, 0.06, 0.08)}, (0, 0, -0.34)),
            ),
            "crust",
        )
        tgt = ObjectSpec(
            (
                PartSpec("toaster_body", "box", {"center": (0, 0, 0), "half": (0.6, 0.35, 0.4)}, (0, 0, 0)),
                PartSpec("slot", "box", {"center": (0, 0, 0.3), "half": (0.5, 0.1, 0.15)}, (0, 0, 0.4)),
            ),
            "slot",
        )
    elif category == "cut":
        src = ObjectSpec(
            (
                PartSpec("handle", "box", {"center": (-0.5, 0, 0), "half": (0.25, 0.05, 0.07)}, (-0.25, 0, 0)),
                PartSpec("blade", "box", {"center": (0.25, 0, 0.03), "half": (0.5, 0.01, 0.1)}, (-0.25, 0, 0)),
                PartSpec("blade_edge", "box", {"center": (0.25, 0, -0.12), "half": (0.5, 0.012, 0.05)}, (-0.25, 0, -0.12)),
            ),
            "blade_edge",
        )
        tgt = ObjectSpec(
            (
                PartSpec("fruit", "sphere", {"center": (0, 0, 0), "radius": 0.5}, (0, 0, 0)),
                PartSpec("stem", "cylinder", {"p0": (0, 0, 0.48), "p1": (0, 0, 0.65), "radius": 0.03}, (0, 0, 0.48)),
            ),
            "fruit",
            contact_anchor=(0, 0, 0.5),
            contact_radius=0.4,
        )
    else:
        raise ValueError(f"unknown category {category!r}")
    return src, tgt


def _allocate(areas: Sequence[float], total: int) -> list[int]:
    """Largest-remainder split of ``total`` points proportional to area (at least one each)."""
    areas = np.asarray(areas, dtype=np.float64)
    raw = areas / areas.sum() * (total - len(areas))
    counts = np.floor(raw).astype(int) + 1
    rest = total - counts.sum()
    order = np.argsort(-(raw - np.floor(raw)), kind="stable")
    counts[order[:rest]] += 1
    return counts.tolist()


@dataclass
class GeneratedObject:
    points: np.ndarray
    part_labels: np.ndarray
    contacts: np.ndarray
    functional_part: int = field(default=-1)


def _build_object(spec: ObjectSpec, n_points: int, sample_seed: int, rng_shape: np.random.Generator, perturbation: float) -> GeneratedObject:
    areas = [_SAMPLERS[p.kind][1](p.params) for p in spec.parts]
    counts = _allocate(areas, n_points)
    rng_sample = np.random.default_rng(sample_seed)
    pts, labels = [], []
    anchor_out = None
    for part, count in zip(spec.parts, counts):
        local = _SAMPLERS[part.kind][0](part.params, count, rng_sample)
        scale = 1.0 + perturbation * rng_shape.uniform(-1.0, 1.0, size=3)
        anchor = np.asarray(part.anchor, dtype=np.float64)
        local = anchor + (local - anchor) * scale
        if part.name == spec.functional_part and spec.contact_anchor is not None:
            anchor_out = anchor + (np.asarray(spec.contact_anchor, float) - anchor) * scale
        pts.append(local)
        labels.append(np.full(count, PART_ID[part.name]))
    # object-level anisotropic stretch
    stretch = 1.0 + 0.5 * perturbation * rng_shape.uniform(-1.0, 1.0, size=3)
    points = np.vstack(pts) * stretch
    part_labels = np.concatenate(labels)
    fid = PART_ID[spec.functional_part]
    on_part = part_labels == fid
    if anchor_out is None:
        contacts = points[on_part]
    else:
        anchor_out = anchor_out * stretch
        d = np.linalg.norm(points - anchor_out, axis=1)
        near = on_part & (d <= spec.contact_radius)
        if not near.any():
            near = on_part & (d == d[on_part].min())
        contacts = points[near]
    return GeneratedObject(points, part_labels, contacts, fid)


SOURCE_OFFSET = np.array([1.8, 0.0, 0.6])


def generate_pair(
    category: str | AffordanceCategory,
    instance_seed: int,
    perturbation: float = 0.0,
    n_points: int = DEFAULT_N,
    sigma: float = GENERATOR_SIGMA,
    num_channels: int = len(CATEGORY_NAMES),
) -> ObjectPair:
    """Procedural source/target pair with ground-truth affordance and part labels.

    The target sits at the origin and the source is displaced by
    ``SOURCE_OFFSET``. Surface sampling is fixed per category, so with
    ``perturbation == 0`` the geometry does not depend on ``instance_seed``.
    Features are left empty; see :func:`synth_features`.
    """
    cat = category if isinstance(category, AffordanceCategory) else category_by_name(category)
    if cat.name not in CATEGORY_NAMES:
        raise ValueError(f"unknown category {cat.name!r}")
    if not 0.0 <= perturbation <= 0.5:
        raise ValueError("perturbation must lie in [0, 0.5]")
    src_spec, tgt_spec = _objects(cat.name)
    kind = CATEGORY_NAMES.index(cat.name)
    rng_shape = np.random.default_rng([instance_seed, kind, 7])
    src = _build_object(src_spec, n_points, 1000 + 2 * kind, rng_shape, perturbation)
    tgt = _build_object(tgt_spec, n_points, 1001 + 2 * kind, rng_shape, perturbation)
    clouds = []
    for obj, offset in ((src, SOURCE_OFFSET), (tgt, np.zeros(3))):
        aff = np.zeros((n_points, num_channels))
        aff[:, cat.id] = propagation_values(obj.points, obj.contacts, sigma)
        clouds.append(FeatureCloud(obj.points + offset, np.zeros((n_points, 0)), aff, obj.part_labels))
    return ObjectPair(clouds[0], clouds[1], cat)


def functional_part_ids(category: str) -> tuple[int, int]:
    src, tgt = _objects(category)
    return PART_ID[src.functional_part], PART_ID[tgt.functional_part]


def contact_points(pair: ObjectPair) -> tuple[np.ndarray, np.ndarray]:
    """Points whose affordance is exactly 1 on the pair's own channel."""
    ch = pair.category.id
    return (
        pair.source.points[pair.source.affordance[:, ch] == 1.0],
        pair.target.points[pair.target.affordance[:, ch] == 1.0],
    )


# ---------------------------------------------------------------------------
# stand-in semantic features


def part_vectors(n: int, feature_seed: int, num_parts: int = len(PART_NAMES), max_cos: float = 0.3) -> np.ndarray:
    """One unit vector per part id, redrawn until pairwise |cos| < max_cos when n >= 256."""
    rng = np.random.default_rng([feature_seed, 31])
    for _ in range(1000):
        v = rng.standard_normal((num_parts, n))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        if n < 256:
            return v
        cos = np.abs(v @ v.T)
        np.fill_diagonal(cos, 0.0)
        if cos.max() < max_cos:
            return v
    raise RuntimeError("could not draw well-separated part vectors")


def _cloud_seed(cloud: FeatureCloud) -> int:
    return zlib.crc32(np.ascontiguousarray(cloud.points).tobytes())


def synth_features(
    pair: ObjectPair,
    n: int,
    feature_seed: int = 0,
    noise: float = 0.0,
    mode: str = "part",
) -> ObjectPair:
    """Fill both clouds with part-consistent features (``mode="part"``) or zeros (``"none"``)."""
    if mode not in ("part", "none"):
        raise ValueError(f"unknown feature mode {mode!r}")
    out = []
    table = part_vectors(n, feature_seed) if mode == "part" else None
    for cloud in (pair.source, pair.target):
        if cloud.part_labels is None:
            raise ValueError("part labels are required to synthesize features")
        if mode == "none":
            feats = np.zeros((len(cloud), n))
        else:
            feats = table[cloud.part_labels].copy()
            if noise > 0:
                rng = np.random.default_rng([feature_seed, _cloud_seed(cloud)])
                feats += noise * rng.standard_normal(feats.shape)
        out.append(FeatureCloud(cloud.points, feats, cloud.affordance, cloud.part_labels))
    return ObjectPair(out[0], out[1], pair.category)


# ---------------------------------------------------------------------------
# occlusion


def occlusion_mask(cloud: FeatureCloud, level: float, seed: int = 0, tol: float = 0.02, max_iter: int = 60):
    """Keep-mask and radius of a spherical occluder removing ``level`` of the points."""
    if not 0.05 <= level <= 0.6:
        raise ValueError("occlusion level must lie in [0.05, 0.6]")
    rng = np.random.default_rng([seed, 97])
    pts = cloud.points
    center = pts[rng.integers(len(pts))]
    dist = np.linalg.norm(pts - center, axis=1)
    lo, hi = 0.0, float(dist.max()) * (1.0 + 1e-9)
    n = len(pts)
    for _ in range(max_iter):
        r = 0.5 * (lo + hi)
        frac = np.count_nonzero(dist < r) / n
        if abs(frac - level) <= tol:
            return dist >= r, r
        if frac < level:
            lo = r
        else:
            hi = r
    raise OcclusionError("occlusion infeasible")


def apply_occlusion(cloud: FeatureCloud, level: float, seed: int = 0) -> FeatureCloud:
    keep, _ = occlusion_mask(cloud, level, seed)
    return cloud.subset(np.flatnonzero(keep))


# ---------------------------------------------------------------------------
# dataset layout


@dataclass(frozen=True)
class SamplePaths:
    src: Path
    tgt: Path
    meta: Path

    def load(self) -> ObjectPair:
        meta = json.loads(self.meta.read_text())
        cat = AffordanceCategory(int(meta["category_id"]), meta["category_name"])
        return ObjectPair(load_cloud(self.src), load_cloud(self.tgt), cat)


@dataclass
class DatasetManifest:
    categories: list
    train: dict  # category id -> SamplePaths
    eval: dict  # category id -> list[SamplePaths]

    @property
    def num_categories(self) -> int:
        return len(self.categories)

    def train_pairs(self) -> list[ObjectPair]:
        return [self.train[c.id].load() for c in self.categories]

    def eval_pairs(self) -> list[ObjectPair]:
        return [s.load() for c in self.categories for s in self.eval.get(c.id, [])]


def write_pair(pair: ObjectPair, directory, instance_seed: int) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_cloud(pair.source, d / "src.pc")
    save_cloud(pair.target, d / "tgt.pc")
    meta = {"category_id": pair.category.id, "category_name": pair.category.name, "instance_seed": instance_seed}
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _sample_dirs(directory: Path) -> list[Path]:
    """A directory holding src.pc is one sample; otherwise each child directory with src.pc is."""
    if (directory / "src.pc").exists():
        return [directory]
    return sorted(p for p in directory.iterdir() if p.is_dir() and (p / "src.pc").exists())


def _paths(d: Path) -> SamplePaths:
    for name in ("src.pc", "tgt.pc", "meta.json"):
        if not (d / name).exists():
            raise ManifestError(f"{d}: missing {name}")
    return SamplePaths(d / "src.pc", d / "tgt.pc", d / "meta.json")


def build_manifest(root) -> DatasetManifest:
    root = Path(root)
    if not root.is_dir():
        raise ManifestError(f"{root}: not a directory")
    train: dict[int, SamplePaths] = {}
    evals: dict[int, list] = {}
    names: dict[int, str] = {}
    seen: dict[Path, str] = {}

    def claim(sample: SamplePaths, role: str):
        for p in (sample.src, sample.tgt):
            key = p.resolve()
            if key in seen and seen[key] != role:
                raise ManifestError(f"{p}: listed as both train and eval (overlaps {seen[key]})")
            if key in seen:
                raise ManifestError(f"{p}: listed twice")
            seen[key] = role

    for cat_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        train_dir = cat_dir / "train"
        if not train_dir.is_dir():
            raise ManifestError(f"{cat_dir.name}: missing train directory")
        samples = _sample_dirs(train_dir)
        if len(samples) != 1:
            raise ManifestError(
                f"category {cat_dir.name!r}: expected exactly one training sample, found {len(samples)}"
            )
        sample = _paths(samples[0])
        meta = json.loads(sample.meta.read_text())
        cid, cname = int(meta["category_id"]), meta["category_name"]
        if cname != cat_dir.name:
            raise ManifestError(f"{sample.meta}: category {cname!r} does not match directory {cat_dir.name!r}")
        if cid in train:
            raise ManifestError(f"category {cname!r}: duplicate training sample")
        claim(sample, f"train/{cname}")
        train[cid] = sample
        names[cid] = cname
        eval_dir = cat_dir / "eval"
        items = []
        if eval_dir.is_dir():
            for d in sorted(p for p in eval_dir.iterdir() if p.is_dir()):
                s = _paths(d)
                claim(s, f"eval/{cname}")
                items.append(s)
        evals[cid] = items

    if not train:
        raise ManifestError(f"{root}: no categories found")
    if sorted(train) != list(range(len(train))):
        raise ManifestError(f"category ids must be contiguous from 0, got {sorted(train)}")
    if len(set(names.values())) != len(names):
        raise ManifestError("category names must be unique")
    cats = [AffordanceCategory(i, names[i]) for i in sorted(train)]
    return DatasetManifest(cats, train, evals)


def generate_dataset(
    root,
    categories: Sequence[str] = CATEGORY_NAMES,
    n_eval: int = 10,
    perturbation: float = 0.3,
    n_points: int = DEFAULT_N,
    feature_dim: int = 1024,
    feature_seed: int = 0,
    noise: float = 0.0,
    seed: int = 0,
) -> DatasetManifest:
    """Write a one-shot dataset: instance ``seed`` trains, the next ``n_eval`` seeds evaluate."""
    root = Path(root)
    k = len(categories)
    for cid, name in enumerate(categories):
        cat = AffordanceCategory(cid, name)
        for j in range(n_eval + 1):
            inst = seed * 1000 + j
            pair = generate_pair(cat, inst, perturbation, n_points, num_channels=k)
            pair = synth_features(pair, feature_dim, feature_seed, noise)
            target = root / name / "train" if j == 0 else root / name / "eval" / f"{j - 1:03d}"
            write_pair(pair, target, inst)
    return build_manifest(root)


def synthetic_benchmark(
    categories: Sequence[str] = CATEGORY_NAMES,
    n_eval: int = 10,
    perturbation: float = 0.3,
    n_points: int = 512,
    feature_dim: int = 256,
    feature_seed: int = 0,
    noise: float = 0.05,
    seed: int = 0,
    feature_mode: str = "part",
) -> tuple[list[ObjectPair], list[ObjectPair]]:
    """In-memory counterpart of :func:`generate_dataset`: (train pairs, eval pairs)."""
    k = len(categories)
    train, evals = [], []
    for cid, name in enumerate(categories):
        cat = AffordanceCategory(cid, name)
        for j in range(n_eval + 1):
            inst = seed * 1000 + j
            pair = generate_pair(cat, inst, perturbation, n_points, num_channels=k)
            pair = synth_features(pair, feature_dim, feature_seed, noise, mode=feature_mode)
            (train if j == 0 else evals).append(pair)
    return train, evals
