"""Heatmap colouring of affordance maps and a tiny orthographic PPM splatter."""

from __future__ import annotations

import numpy as np

from .core import FeatureCloud

# blue -> cyan -> green -> yellow -> red
_STOPS = np.array(
    [
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
    ]
)


def heat_colors(values: np.ndarray) -> np.ndarray:
    """N x 3 RGB in [0, 1] for affordance values in [0, 1]."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * (len(_STOPS) - 1)
    i = np.minimum(np.floor(v).astype(int), len(_STOPS) - 2)
    f = (v - i)[:, None]
    return _STOPS[i] * (1.0 - f) + _STOPS[i + 1] * f


def colorize(cloud: FeatureCloud, channel: int) -> FeatureCloud:
    """Copy of the cloud whose features are the heatmap RGB of one channel."""
    if cloud.affordance is None or channel >= cloud.num_channels:
        raise ValueError(f"cloud has no affordance channel {channel}")
    rgb = heat_colors(cloud.affordance[:, channel])
    return FeatureCloud(cloud.points, rgb, cloud.affordance, cloud.part_labels)


def _view_basis(azimuth_deg: float, elevation_deg: float):
    az, el = np.radians(azimuth_deg), np.radians(elevation_deg)
    forward = -np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    right = np.cross(forward, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    return right, up, forward


def render_ppm(
    cloud: FeatureCloud,
    channel: int,
    size: int = 256,
    azimuth: float = 30.0,
    elevation: float = 25.0,
    splat: int = 2,
) -> bytes:
    """Binary PPM (P6) of the points seen from a fixed orthographic camera, nearest point wins."""
    if size < 8:
        raise ValueError("image size must be >= 8")
    if cloud.affordance is None or channel >= cloud.num_channels:
        raise ValueError(f"cloud has no affordance channel {channel}")
    rgb = (heat_colors(cloud.affordance[:, channel]) * 255.0 + 0.5).astype(np.uint8)
    right, up, forward = _view_basis(azimuth, elevation)
    p = cloud.points - cloud.points.mean(axis=0)
    x, y, depth = p @ right, p @ up, p @ forward
    extent = max(np.abs(x).max(), np.abs(y).max(), 1e-12) * 1.05
    col = np.round((x / extent * 0.5 + 0.5) * (size - 1)).astype(int)
    row = np.round((0.5 - y / extent * 0.5) * (size - 1)).astype(int)
    image = np.full((size, size, 3), 255, dtype=np.uint8)
    zbuf = np.full((size, size), np.inf)
    # far points first so nearer ones overwrite; stable order keeps ties deterministic
    for i in np.argsort(-depth, kind="stable"):
        r0, r1 = max(row[i] - splat, 0), min(row[i] + splat + 1, size)
        c0, c1 = max(col[i] - splat, 0), min(col[i] + splat + 1, size)
        patch = zbuf[r0:r1, c0:c1]
        closer = depth[i] <= patch
        patch[closer] = depth[i]
        image[r0:r1, c0:c1][closer] = rgb[i]
    return f"P6\n{size} {size}\n255\n".encode() + image.tobytes()
