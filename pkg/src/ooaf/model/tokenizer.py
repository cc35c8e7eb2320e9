"""Patch-center selection and neighborhood grouping (no learnable state)."""

from __future__ import annotations

import numpy as np


def fps(points: np.ndarray, count: int) -> np.ndarray:
    """Farthest point sampling.

    Starts from the point farthest from the centroid; every later pick
    maximizes the squared distance to the already-selected set. Ties go to
    the lowest index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if count > n:
        raise ValueError(f"cannot select {count} centers from {n} points")
    if count <= 0:
        return np.zeros(0, dtype=np.int64)
    out = np.empty(count, dtype=np.int64)
    centroid = points.mean(axis=0)
    first = int(np.argmax(((points - centroid) ** 2).sum(axis=1)))
    out[0] = first
    mind = ((points - points[first]) ** 2).sum(axis=1)
    taken = np.zeros(n, dtype=bool)
    taken[first] = True
    for i in range(1, count):
        cand = np.where(taken, -1.0, mind)
        nxt = int(np.argmax(cand))
        out[i] = nxt
        taken[nxt] = True
        np.minimum(mind, ((points - points[nxt]) ** 2).sum(axis=1), out=mind)
    return out


def knn_indices(points: np.ndarray, centers: np.ndarray, k: int, radius: float) -> np.ndarray:
    """T x k neighbor indices: nearest within ``radius`` first (ties by index), padded with the nearest."""
    if k < 1:
        raise ValueError("k must be >= 1")
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    d2 = ((centers[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
    d2 = np.where(d2 <= radius * radius, d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    if order.shape[1] < k:
        order = np.concatenate([order, np.repeat(order[:, :1], k - order.shape[1], axis=1)], axis=1)
    picked = np.take_along_axis(d2, order, axis=1)
    return np.where(np.isfinite(picked), order, order[:, :1])


def knn_group(points, features, centers, k: int, radius: float) -> np.ndarray:
    """T patches of shape k x (3 + n); coordinates are relative to each patch center."""
    points = np.asarray(points, dtype=np.float64)
    features = np.asarray(features).reshape(points.shape[0], -1)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    idx = knn_indices(points, centers, k, radius)
    rel = points[idx] - centers[:, None, :]
    return np.concatenate([rel, features[idx]], axis=-1)


def nearest_center(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((np.asarray(points)[:, None, :] - np.asarray(centers)[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(d2, axis=1)
