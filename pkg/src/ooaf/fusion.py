"""Multi-view projection of 2D feature maps onto 3D points.

Each point is projected into every camera, the depth image is sampled at the
projection, and the signed difference between observed depth and point depth
decides whether the view sees the point and how much it counts. Features (and
optional instance masks) are then averaged with those weights.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import FeatureCloud

DEFAULT_MU = 0.02


@dataclass(frozen=True)
class CameraView:
    intrinsics: np.ndarray
    extrinsic: np.ndarray  # camera-from-world, 4x4
    width: int
    height: int
    depth: np.ndarray  # H x W meters, 0 = invalid
    featmap: np.ndarray  # H x W x n
    mask: Optional[np.ndarray] = None  # H x W x M

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64).reshape(3, 3)
        e = np.asarray(self.extrinsic, dtype=np.float64).reshape(4, 4)
        if abs(k[2, 2] - 1.0) > 1e-12:
            raise ValueError("intrinsics[2][2] must be 1")
        depth = np.asarray(self.depth, dtype=np.float64)
        if depth.shape != (self.height, self.width):
            raise ValueError(f"depth shape {depth.shape} != ({self.height}, {self.width})")
        if np.any(depth < 0):
            raise ValueError("negative depth")
        feat = np.asarray(self.featmap, dtype=np.float64)
        if feat.ndim == 2:
            feat = feat[:, :, None]
        if feat.shape[:2] != (self.height, self.width):
            raise ValueError("feature map size does not match width/height")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "extrinsic", e)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "featmap", feat)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=np.float64)
            if m.ndim == 2:
                m = m[:, :, None]
            if m.shape[:2] != (self.height, self.width):
                raise ValueError("mask size does not match width/height")
            object.__setattr__(self, "mask", m)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.intrinsics, self.extrinsic, self.depth, self.featmap):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.mask is not None:
            h.update(np.ascontiguousarray(self.mask).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class FusionWeights:
    u: np.ndarray
    r_sensor: float
    r_point: float
    d: float
    d_trunc: float
    v: int
    w: float


@dataclass(frozen=True)
class FusionResult:
    cloud: FeatureCloud
    mask: Optional[np.ndarray]
    coverage: np.ndarray


def project_points(x: np.ndarray, view: CameraView):
    """Vectorized projection: returns (u: N x 2, r_point: N, in_frustum: N)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xc = x @ view.extrinsic[:3, :3].T + view.extrinsic[:3, 3]
    r_point = xc[:, 2]
    uvw = xc @ view.intrinsics.T
    with np.errstate(divide="ignore", invalid="ignore"):
        u = uvw[:, :2] / uvw[:, 2:3]
    ok = (r_point > 0) & np.all(np.isfinite(u), axis=1)
    ok &= (u[:, 0] >= 0) & (u[:, 0] <= view.width - 1)
    ok &= (u[:, 1] >= 0) & (u[:, 1] <= view.height - 1)
    return u, r_point, ok


def project_to_view(x, view: CameraView) -> tuple[np.ndarray, float, bool]:
    u, r, ok = project_points(np.asarray(x, dtype=np.float64).reshape(1, 3), view)
    return u[0], float(r[0]), bool(ok[0])


def _corners(u: np.ndarray, width: int, height: int):
    x0 = np.floor(u[:, 0]).astype(np.int64)
    y0 = np.floor(u[:, 1]).astype(np.int64)
    fx = u[:, 0] - x0
    fy = u[:, 1] - y0
    # an integral coordinate collapses both corners onto the same pixel
    x1 = np.where(fx > 0, np.minimum(x0 + 1, width - 1), x0)
    y1 = np.where(fy > 0, np.minimum(y0 + 1, height - 1), y0)
    return x0, x1, y0, y1, fx, fy


def bilinear_sample_many(image: np.ndarray, u: np.ndarray):
    """Bilinear samples at each row of ``u`` (inside the image).

    Returns ``(values, all_corners_nonzero)``; the second flag is the depth
    validity rule when ``image`` is a depth map.
    """
    img = image if image.ndim == 3 else image[:, :, None]
    h, w = img.shape[:2]
    x0, x1, y0, y1, fx, fy = _corners(np.atleast_2d(u), w, h)
    c00, c01 = img[y0, x0], img[y0, x1]
    c10, c11 = img[y1, x0], img[y1, x1]
    fx = fx[:, None]
    fy = fy[:, None]
    top = (1.0 - fx) * c00 + fx * c01
    bot = (1.0 - fx) * c10 + fx * c11
    vals = (1.0 - fy) * top + fy * bot
    nonzero = np.all((c00 != 0) & (c01 != 0) & (c10 != 0) & (c11 != 0), axis=1)
    if image.ndim == 2:
        vals = vals[:, 0]
    return vals, nonzero


def bilinear_sample(image: np.ndarray, u) -> tuple[np.ndarray, bool]:
    vals, valid = bilinear_sample_many(image, np.asarray(u, dtype=np.float64).reshape(1, 2))
    return vals[0], bool(valid[0])


def _weights(points: np.ndarray, view: CameraView, mu: float):
    u, r_point, inside = project_points(points, view)
    n = points.shape[0]
    r_sensor = np.zeros(n)
    valid = np.zeros(n, dtype=bool)
    if inside.any():
        r_sensor[inside], valid[inside] = bilinear_sample_many(view.depth, u[inside])
    d = np.where(inside, r_sensor - r_point, 0.0)
    d_trunc = np.clip(d, -mu, mu)
    v = inside & valid & (d >= -mu)
    sigma = mu / 2.0
    w = np.where(v, np.exp(-(d_trunc**2) / (2.0 * sigma * sigma)), 0.0)
    return u, r_sensor, r_point, d, d_trunc, v, w


def view_weight(x, view: CameraView, mu: float = DEFAULT_MU) -> FusionWeights:
    if mu <= 0:
        raise ValueError("mu must be positive")
    u, rs, rp, d, dt, v, w = _weights(np.asarray(x, dtype=np.float64).reshape(1, 3), view, mu)
    return FusionWeights(u[0], float(rs[0]), float(rp[0]), float(d[0]), float(dt[0]), int(v[0]), float(w[0]))


def fuse_cloud(points, views: Sequence[CameraView], mu: float = DEFAULT_MU) -> FusionResult:
    """Weighted multi-view average of sampled features at every point."""
    if not views:
        raise ValueError("at least one view is required")
    if mu <= 0:
        raise ValueError("mu must be positive")
    points = np.asarray(points, dtype=np.float64)
    dims = {v.featmap.shape[2] for v in views}
    if len(dims) != 1:
        raise ValueError(f"views disagree on feature dimension: {sorted(dims)}")
    n_feat = dims.pop()
    use_mask = all(v.mask is not None for v in views)
    if use_mask and len({v.mask.shape[2] for v in views}) != 1:
        raise ValueError("views disagree on mask channel count")

    # canonical order makes the floating-point sum independent of the input order
    ordered = sorted(views, key=lambda v: v.digest())
    n = points.shape[0]
    acc = np.zeros((n, n_feat))
    acc_mask = np.zeros((n, ordered[0].mask.shape[2])) if use_mask else None
    wsum = np.zeros(n)
    coverage = np.zeros(n, dtype=np.int64)
    for view in ordered:
        u, _, _, _, _, v, w = _weights(points, view, mu)
        if not v.any():
            continue
        feats, _ = bilinear_sample_many(view.featmap, u[v])
        acc[v] += w[v, None] * feats
        if use_mask:
            m, _ = bilinear_sample_many(view.mask, u[v])
            acc_mask[v] += w[v, None] * m
        wsum[v] += w[v]
        coverage[v] += w[v] > 0
    seen = wsum > 0
    fused = np.zeros_like(acc)
    fused[seen] = acc[seen] / wsum[seen, None]
    fused_mask = None
    if use_mask:
        fused_mask = np.zeros_like(acc_mask)
        fused_mask[seen] = acc_mask[seen] / wsum[seen, None]
    return FusionResult(FeatureCloud(points, fused), fused_mask, coverage)


# ---------------------------------------------------------------------------
# camera files


def write_pgm16(path, depth_m: np.ndarray) -> None:
    mm = np.clip(np.rint(np.asarray(depth_m) * 1000.0), 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(mm.tobytes())


def read_pgm16(path) -> np.ndarray:
    """16-bit binary PGM in millimeters -> meters."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while data[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr.astype(np.float64) / 1000.0


def write_feature_file(path, fmap: np.ndarray) -> None:
    fmap = np.asarray(fmap)
    if fmap.ndim == 2:
        fmap = fmap[:, :, None]
    h, w, c = fmap.shape
    with open(path, "wb") as fh:
        fh.write(f"feat {h} {w} {c}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(fmap, dtype="<f4").tobytes())


def read_feature_file(path) -> np.ndarray:
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    head = data[:nl].decode("ascii").split()
    if len(head) != 4 or head[0] != "feat":
        raise ValueError(f"{path}: malformed feature header")
    h, w, c = (int(v) for v in head[1:])
    arr = np.frombuffer(data, dtype="<f4", count=h * w * c, offset=nl + 1)
    return arr.reshape(h, w, c).astype(np.float64)


def load_camera(path) -> CameraView:
    path = Path(path)
    meta = json.loads(path.read_text())
    base = path.parent
    mask = None
    if meta.get("mask_file"):
        mask = read_feature_file(base / meta["mask_file"])
    return CameraView(
        intrinsics=np.array(meta["intrinsics"], dtype=np.float64).reshape(3, 3),
        extrinsic=np.array(meta["extrinsic"], dtype=np.float64).reshape(4, 4),
        width=int(meta["width"]),
        height=int(meta["height"]),
        depth=read_pgm16(base / meta["depth_file"]),
        featmap=read_feature_file(base / meta["feature_file"]),
        mask=mask,
    )


def save_camera(view: CameraView, path) -> None:
    path = Path(path)
    stem = path.stem
    write_pgm16(path.parent / f"{stem}_depth.pgm", view.depth)
    write_feature_file(path.parent / f"{stem}_feat.bin", view.featmap)
    meta = {
        "intrinsics": view.intrinsics.reshape(-1).tolist(),
        "extrinsic": view.extrinsic.reshape(-1).tolist(),
        "width": view.width,
        "height": view.height,
        "depth_file": f"{stem}_depth.pgm",
        "feature_file": f"{stem}_feat.bin",
    }
    if view.mask is not None:
        write_feature_file(path.parent / f"{stem}_mask.bin", view.mask)
        meta["mask_file"] = f"{stem}_mask.bin"
    path.write_text(json.dumps(meta, indent=2) + "\n")


# ---------------------------------------------------------------------------
# synthetic scene


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-from-world matrix for a camera at ``eye`` looking at ``target`` (+z forward, +y down)."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = -rot @ eye
    return m


def sphere_feature(x: np.ndarray, n: int) -> np.ndarray:
    """Smooth deterministic feature field used by the synthetic sphere scene."""
    x = np.atleast_2d(x)
    freqs = np.arange(1, n + 1, dtype=np.float64)
    return np.cos(np.outer(x[:, 0] + 2.0 * x[:, 1] - 0.5 * x[:, 2], freqs) * 0.7 + freqs)


def render_sphere_view(
    eye,
    radius: float = 0.5,
    n_feat: int = 8,
    width: int = 64,
    height: int = 48,
    focal: float = 60.0,
) -> CameraView:
    """Ray-cast a sphere at the origin into a depth + feature image pair."""
    k = np.array([[focal, 0.0, (width - 1) / 2.0], [0.0, focal, (height - 1) / 2.0], [0.0, 0.0, 1.0]])
    ext = look_at(eye)
    rot, trans = ext[:3, :3], ext[:3, 3]
    cam_center = -rot.T @ trans
    us, vs = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    rays_cam = np.stack([(us - k[0, 2]) / focal, (vs - k[1, 2]) / focal, np.ones_like(us)], axis=-1)
    dirs = rays_cam.reshape(-1, 3) @ rot  # world directions with camera-z component 1
    b = dirs @ cam_center
    a = np.einsum("ij,ij->i", dirs, dirs)
    c = cam_center @ cam_center - radius * radius
    disc = b * b - a * c
    hit = disc >= 0
    t = np.zeros_like(b)
    t[hit] = (-b[hit] - np.sqrt(disc[hit])) / a[hit]
    hit &= t > 0
    depth = np.where(hit, t, 0.0).reshape(height, width)  # z-depth since ray z-component is 1
    pts = cam_center + dirs * t[:, None]
    feat = np.zeros((height * width, n_feat))
    feat[hit] = sphere_feature(pts[hit], n_feat)
    return CameraView(k, ext, width, height, depth, feat.reshape(height, width, n_feat))
