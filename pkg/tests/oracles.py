"""Slow, loop-based reference implementations. Written independently of the package code."""

import math

import numpy as np


# -- fusion


def project_ref(x, K, E):
    xh = np.array([x[0], x[1], x[2], 1.0])
    xc = E @ xh
    z = xc[2]
    uvw = K @ xc[:3]
    return np.array([uvw[0] / uvw[2], uvw[1] / uvw[2]]), z


def bilinear_ref(img, u):
    h, w = img.shape[:2]
    x, y = u
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    out = 0.0
    corners = []
    for dy in (0, 1):
        for dx in (0, 1):
            wx = (x - x0) if dx else (1.0 - (x - x0))
            wy = (y - y0) if dy else (1.0 - (y - y0))
            wgt = wx * wy
            if wgt == 0.0:
                continue
            xi, yi = min(x0 + dx, w - 1), min(y0 + dy, h - 1)
            out = out + wgt * img[yi, xi]
            corners.append(img[yi, xi])
    return out, corners


def weight_ref(x, view, mu):
    u, z = project_ref(x, view.intrinsics, view.extrinsic)
    if z <= 0 or not (0 <= u[0] <= view.width - 1 and 0 <= u[1] <= view.height - 1):
        return u, 0.0
    r_sensor, corners = bilinear_ref(view.depth, u)
    if any(c == 0 for c in corners):
        return u, 0.0
    d = r_sensor - z
    if d < -mu:
        return u, 0.0
    dt = min(max(d, -mu), mu)
    s = mu / 2.0
    return u, math.exp(-dt * dt / (2 * s * s))


def fuse_ref(points, views, mu):
    n_feat = views[0].featmap.shape[2]
    out = np.zeros((len(points), n_feat))
    for i, x in enumerate(points):
        num = np.zeros(n_feat)
        den = 0.0
        for view in views:
            u, w = weight_ref(x, view, mu)
            if w > 0:
                f, _ = bilinear_ref(view.featmap, u)
                num += w * f
                den += w
        if den > 0:
            out[i] = num / den
    return out


# -- metrics


def aiou_ref(pred, gt):
    total = 0.0
    for k in range(1, 100):
        t = k / 100.0
        inter = union = 0
        for p, g in zip(pred, gt):
            a, b = p > t, g >= 0.5
            inter += a and b
            union += a or b
        total += 1.0 if union == 0 else inter / union
    return 100.0 * total / 99.0


def sim_ref(pred, gt):
    sp, sg = sum(pred), sum(gt)
    return sum(min(p / sp, g / sg) for p, g in zip(pred, gt))


def mae_ref(pred, gt):
    return sum(abs(p - g) for p, g in zip(pred, gt)) / len(pred)


def auc_ref(pred, gt):
    pos = [p for p, g in zip(pred, gt) if g >= 0.5]
    neg = [p for p, g in zip(pred, gt) if g < 0.5]
    score = 0.0
    for a in pos:
        for b in neg:
            score += 1.0 if a > b else (0.5 if a == b else 0.0)
    return 100.0 * score / (len(pos) * len(neg))


# -- tokenizer


def fps_ref(points, count):
    n = len(points)
    c = points.mean(axis=0)
    best, first = -1.0, 0
    for i in range(n):
        d = float(np.sum((points[i] - c) ** 2))
        if d > best:
            best, first = d, i
    chosen = [first]
    mind = [float(np.sum((points[j] - points[first]) ** 2)) for j in range(n)]
    while len(chosen) < count:
        best, pick = -1.0, 0
        for j in range(n):
            if mind[j] > best:
                best, pick = mind[j], j
        chosen.append(pick)
        for j in range(n):
            mind[j] = min(mind[j], float(np.sum((points[j] - points[pick]) ** 2)))
    return np.array(chosen)


def knn_ref(points, center, k, radius):
    d = [(float(np.sum((p - center) ** 2)), i) for i, p in enumerate(points)]
    d.sort()
    ok = [i for dist, i in d if dist <= radius * radius][:k]
    while len(ok) < k:
        ok.append(ok[0])
    return ok


# -- labels


def propagate_ref(points, contacts, sigma):
    out = np.zeros(len(points))
    for i, x in enumerate(points):
        best = 0.0
        for c in contacts:
            best = max(best, math.exp(-float(np.sum((x - c) ** 2)) / (2 * sigma * sigma)))
        out[i] = best if best >= 1e-4 else 0.0
    return out
