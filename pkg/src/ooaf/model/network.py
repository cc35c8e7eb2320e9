"""The paired affordance network: tokenizer, joint cross-attention decoder, per-point head.

Parameters live in a flat ``dict[str, ndarray]``; the forward pass keeps the
caches needed by the hand-written backward pass. Role 0 is the source object,
role 1 the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import FeatureCloud, ObjectPair, normalize_pair
from .config import ModelConfig
from .layers import (
    attention_bwd,
    attention_fwd,
    gelu,
    gelu_grad,
    layernorm_bwd,
    layernorm_fwd,
    linear_bwd,
    linear_fwd,
    mlp_bwd,
    mlp_fwd,
    sigmoid,
)
from .tokenizer import fps, knn_indices, nearest_center

Params = dict  # name -> ndarray

SOURCE, TARGET = 0, 1
PRED_CLAMP = 1e-7


def param_shapes(cfg: ModelConfig) -> dict:
    shapes = {}
    widths = [3 + cfg.feature_dim, *cfg.patch_hidden]
    for i in range(len(cfg.patch_hidden)):
        shapes[f"patch.{i}.w"] = (widths[i], widths[i + 1])
        shapes[f"patch.{i}.b"] = (widths[i + 1],)
    d = cfg.token_dim
    shapes["role.w"] = (cfg.patch_hidden[-1] + 2, d)
    shapes["role.b"] = (d,)
    shapes["pos.0.w"] = (3, cfg.pos_dim)
    shapes["pos.0.b"] = (cfg.pos_dim,)
    shapes["pos.1.w"] = (cfg.pos_dim, d)
    shapes["pos.1.b"] = (d,)
    for b in range(cfg.decoder_blocks):
        p = f"blocks.{b}"
        shapes[f"{p}.ln1.g"] = (d,)
        shapes[f"{p}.ln1.b"] = (d,)
        for proj in "qkvo":
            shapes[f"{p}.attn.{proj}.w"] = (d, d)
            shapes[f"{p}.attn.{proj}.b"] = (d,)
        shapes[f"{p}.ln2.g"] = (d,)
        shapes[f"{p}.ln2.b"] = (d,)
        shapes[f"{p}.ff.0.w"] = (d, cfg.ff_hidden)
        shapes[f"{p}.ff.0.b"] = (cfg.ff_hidden,)
        shapes[f"{p}.ff.1.w"] = (cfg.ff_hidden, d)
        shapes[f"{p}.ff.1.b"] = (d,)
    shapes["ln_out.g"] = (d,)
    shapes["ln_out.b"] = (d,)
    widths = [d, *cfg.head_hidden, cfg.num_channels]
    for i in range(len(widths) - 1):
        shapes[f"head.{i}.w"] = (widths[i], widths[i + 1])
        shapes[f"head.{i}.b"] = (widths[i + 1],)
    return shapes


def init_params(cfg: ModelConfig, seed: Optional[int] = None) -> Params:
    """He-uniform weights, zero biases, unit LayerNorm gains."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    dtype = np.dtype(cfg.dtype)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".w"):
            limit = np.sqrt(6.0 / shape[0])
            params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
        elif name.endswith(".g"):
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    return params


def zeros_like(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def cast_params(params: Params, dtype) -> Params:
    return {k: v.astype(dtype) for k, v in params.items()}


# ---------------------------------------------------------------------------
# geometry (index selection, never differentiated)


@dataclass(frozen=True)
class Geometry:
    points: np.ndarray
    features: np.ndarray
    center_idx: np.ndarray
    group_idx: np.ndarray
    assign: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return self.points[self.center_idx]


def prepare(cloud: FeatureCloud, cfg: ModelConfig) -> Geometry:
    """Centers, neighborhoods and point-to-center assignment for a normalized cloud."""
    if cloud.feature_dim != cfg.feature_dim:
        raise ValueError(f"feature dimension {cloud.feature_dim} does not match config {cfg.feature_dim}")
    pts = cloud.points
    t = min(cfg.num_groups, len(pts))
    cidx = fps(pts, t)
    centers = pts[cidx]
    gidx = knn_indices(pts, centers, cfg.group_size, cfg.group_radius)
    assign = nearest_center(pts, centers)
    return Geometry(pts, cloud.features, cidx, gidx, assign)


# ---------------------------------------------------------------------------
# encoder


def _patch_fwd(rel, feats, gidx, params, n_layers):
    """Shared point MLP over every patch row, then max over rows.

    The first layer splits into a coordinate part applied per patch row and a
    feature part applied once per point and gathered.
    """
    w0 = params["patch.0.w"]
    feat_proj = feats @ w0[3:] if feats.shape[1] else np.zeros((feats.shape[0], w0.shape[1]), w0.dtype)
    z = rel @ w0[:3] + feat_proj[gidx] + params["patch.0.b"]
    caches = [(rel, z)]
    h = gelu(z) if n_layers > 1 else z
    for i in range(1, n_layers):
        z, xin = linear_fwd(h, params, f"patch.{i}")
        caches.append((xin, z))
        h = gelu(z) if i < n_layers - 1 else z
    arg = np.argmax(h, axis=1)  # T x C
    pooled = np.take_along_axis(h, arg[:, None, :], axis=1)[:, 0, :]
    return pooled, (caches, arg, h.shape, feats, gidx)


def _patch_bwd(dpooled, cache, params, grads):
    caches, arg, hshape, feats, gidx = cache
    dh = np.zeros(hshape, dtype=dpooled.dtype)
    np.put_along_axis(dh, arg[:, None, :], dpooled[:, None, :], axis=1)
    n_layers = len(caches)
    for i in reversed(range(1, n_layers)):
        xin, z = caches[i]
        if i < n_layers - 1:
            dh = dh * gelu_grad(z)
        dh = linear_bwd(dh, xin, params, grads, f"patch.{i}")
    rel, z0 = caches[0]
    dz = dh * gelu_grad(z0) if n_layers > 1 else dh
    c = z0.shape[-1]
    grads["patch.0.b"] += dz.reshape(-1, c).sum(axis=0)
    dw = np.empty_like(params["patch.0.w"])
    dw[:3] = rel.reshape(-1, 3).T @ dz.reshape(-1, c)
    if feats.shape[1]:
        dfeat = np.zeros((feats.shape[0], c), dtype=dz.dtype)
        np.add.at(dfeat, gidx.reshape(-1), dz.reshape(-1, c))
        dw[3:] = feats.T @ dfeat
    grads["patch.0.w"] += dw


def tokenize_fwd(geo: Geometry, role: int, params: Params, cfg: ModelConfig):
    dtype = params["role.w"].dtype
    centers = geo.centers
    rel = (geo.points[geo.group_idx] - centers[:, None, :]).astype(dtype)
    feats = np.asarray(geo.features, dtype=dtype)
    pooled, pcache = _patch_fwd(rel, feats, geo.group_idx, params, len(cfg.patch_hidden))
    dp = pooled.shape[1]
    wr = params["role.w"]
    proj = pooled @ wr[:dp] + wr[dp + role] + params["role.b"]
    pos, poscache = mlp_fwd(centers.astype(dtype), params, "pos", 2)
    return proj + pos, (pcache, pooled, role, poscache)


def tokenize_bwd(dz, cache, params, grads):
    pcache, pooled, role, poscache = cache
    dp = pooled.shape[1]
    wr = params["role.w"]
    gw = grads["role.w"]
    gw[:dp] += pooled.T @ dz
    gw[dp + role] += dz.sum(axis=0)
    grads["role.b"] += dz.sum(axis=0)
    mlp_bwd(dz, poscache, params, grads, "pos")
    _patch_bwd(dz @ wr[:dp].T, pcache, params, grads)


# ---------------------------------------------------------------------------
# decoder


def _block_fwd(xs, xt, params, b, cfg, rng):
    p = f"blocks.{b}"
    eps = cfg.norm_epsilon
    drop = cfg.dropout if rng is not None else 0.0
    ls, ln1s = layernorm_fwd(xs, params, f"{p}.ln1", eps)
    lt, ln1t = layernorm_fwd(xt, params, f"{p}.ln1", eps)
    ctx_s, ctx_t = (lt, ls) if cfg.attention == "joint" else (ls, lt)
    as_, acs = attention_fwd(ls, ctx_s, params, f"{p}.attn", cfg.heads, drop, rng)
    at, act = attention_fwd(lt, ctx_t, params, f"{p}.attn", cfg.heads, drop, rng)
    ys, yt = xs + as_, xt + at
    outs, caches = [], []
    for y in (ys, yt):
        m, lnc = layernorm_fwd(y, params, f"{p}.ln2", eps)
        f, fc = mlp_fwd(m, params, f"{p}.ff", 2)
        outs.append(y + f)
        caches.append((lnc, fc))
    return outs[0], outs[1], (ln1s, ln1t, acs, act, caches)


def _block_bwd(dos, dot, cache, params, grads, b, cfg):
    p = f"blocks.{b}"
    ln1s, ln1t, acs, act, caches = cache
    dys = []
    for do, (lnc, fc) in zip((dos, dot), caches):
        dm = mlp_bwd(do, fc, params, grads, f"{p}.ff")
        dys.append(do + layernorm_bwd(dm, lnc, params, grads, f"{p}.ln2"))
    dys_, dyt = dys
    dls_q, dctx_s = attention_bwd(dys_, acs, params, grads, f"{p}.attn")
    dlt_q, dctx_t = attention_bwd(dyt, act, params, grads, f"{p}.attn")
    if cfg.attention == "joint":
        dls, dlt = dls_q + dctx_t, dlt_q + dctx_s
    else:
        dls, dlt = dls_q + dctx_s, dlt_q + dctx_t
    dxs = dys_ + layernorm_bwd(dls, ln1s, params, grads, f"{p}.ln1")
    dxt = dyt + layernorm_bwd(dlt, ln1t, params, grads, f"{p}.ln1")
    return dxs, dxt


def decode_fwd(zs, zt, params, cfg, rng=None):
    """Stacked blocks followed by a shared output LayerNorm."""
    caches = []
    for b in range(cfg.decoder_blocks):
        zs, zt, c = _block_fwd(zs, zt, params, b, cfg, rng)
        caches.append(c)
    hs, cs = layernorm_fwd(zs, params, "ln_out", cfg.norm_epsilon)
    ht, ct = layernorm_fwd(zt, params, "ln_out", cfg.norm_epsilon)
    return hs, ht, (caches, cs, ct)


def decode_bwd(dhs, dht, cache, params, grads, cfg):
    caches, cs, ct = cache
    dhs = layernorm_bwd(dhs, cs, params, grads, "ln_out")
    dht = layernorm_bwd(dht, ct, params, grads, "ln_out")
    for b in reversed(range(len(caches))):
        dhs, dht = _block_bwd(dhs, dht, caches[b], params, grads, b, cfg)
    return dhs, dht


def head_fwd(h, params, cfg):
    return mlp_fwd(h, params, "head", len(cfg.head_hidden) + 1)


def head_bwd(dlogits, cache, params, grads):
    return mlp_bwd(dlogits, cache, params, grads, "head")


# ---------------------------------------------------------------------------
# full pass


@dataclass
class PairPass:
    logits: tuple  # per-center logits, T x K for source and target
    geos: tuple
    tokens: tuple
    caches: tuple

    def probs(self, role: int) -> np.ndarray:
        """N x K affordance map: each point takes its nearest center's prediction."""
        return sigmoid(self.logits[role])[self.geos[role].assign]


def forward_geo(gs: Geometry, gt: Geometry, params: Params, cfg: ModelConfig, rng=None) -> PairPass:
    zs, tcs = tokenize_fwd(gs, SOURCE, params, cfg)
    zt, tct = tokenize_fwd(gt, TARGET, params, cfg)
    hs, ht, dcache = decode_fwd(zs, zt, params, cfg, rng)
    ls, hcs = head_fwd(hs, params, cfg)
    lt, hct = head_fwd(ht, params, cfg)
    return PairPass((ls, lt), (gs, gt), (zs, zt), (tcs, tct, dcache, hcs, hct))


def bce_from_probs(pred, gt):
    pred = np.clip(pred, PRED_CLAMP, 1.0 - PRED_CLAMP)
    return float(-np.mean(gt * np.log(pred) + (1.0 - gt) * np.log(1.0 - pred)))


def _bce_logit_grad(logits_c, assign, gt, weight):
    """Gradient of ``weight * BCE(sigmoid(logit[assign]), gt)`` w.r.t. per-center logits.

    Points whose probability sits in the clamp region get zero gradient.
    """
    p = sigmoid(logits_c)[assign]
    live = (p > PRED_CLAMP) & (p < 1.0 - PRED_CLAMP)
    g = np.where(live, (p - gt) * (weight / len(gt)), 0.0).astype(logits_c.dtype)
    out = np.zeros_like(logits_c)
    np.add.at(out, assign, g)
    return out


def pair_loss(pp: PairPass, gts, channel: int) -> float:
    return 0.5 * sum(
        bce_from_probs(sigmoid(pp.logits[r][:, channel])[pp.geos[r].assign].astype(np.float64), gts[r])
        for r in (SOURCE, TARGET)
    )


def backward(pp: PairPass, gts, channel: int, params: Params, cfg: ModelConfig) -> Params:
    grads = zeros_like(params)
    tcs, tct, dcache, hcs, hct = pp.caches
    dh = []
    for role, hc in ((SOURCE, hcs), (TARGET, hct)):
        dlog = np.zeros_like(pp.logits[role])
        dlog[:, channel] = _bce_logit_grad(pp.logits[role][:, channel], pp.geos[role].assign, gts[role], 0.5)
        dh.append(head_bwd(dlog, hc, params, grads))
    dzs, dzt = decode_bwd(dh[0], dh[1], dcache, params, grads, cfg)
    tokenize_bwd(dzs, tcs, params, grads)
    tokenize_bwd(dzt, tct, params, grads)
    return grads


def loss_and_grads(gs: Geometry, gt: Geometry, gts, channel: int, params: Params, cfg: ModelConfig, rng=None):
    pp = forward_geo(gs, gt, params, cfg, rng)
    loss = pair_loss(pp, gts, channel)
    return loss, backward(pp, gts, channel, params, cfg)


# ---------------------------------------------------------------------------
# public single-step operations


@dataclass(frozen=True)
class TokenBatch:
    tokens: np.ndarray
    centers: np.ndarray
    role: int


def patch_encode(patch: np.ndarray, params: Params, cfg: ModelConfig) -> np.ndarray:
    """Encode one k x (3 + n) patch into a single vector."""
    dtype = params["patch.0.w"].dtype
    patch = np.asarray(patch, dtype=dtype)
    k = patch.shape[0]
    gidx = np.arange(k)[None, :]
    pooled, _ = _patch_fwd(patch[None, :, :3], patch[:, 3:], gidx, params, len(cfg.patch_hidden))
    return pooled[0]


def tokenize(cloud: FeatureCloud, role: int, params: Params, cfg: ModelConfig) -> TokenBatch:
    geo = prepare(cloud, cfg)
    z, _ = tokenize_fwd(geo, role, params, cfg)
    return TokenBatch(z, geo.centers, role)


def _dropout_rng(train_flag: bool, cfg: ModelConfig, rng):
    if not train_flag or cfg.dropout == 0.0:
        return None
    return rng if rng is not None else np.random.default_rng(cfg.seed)


def cross_attention(q_tokens, kv_tokens, params: Params, cfg: ModelConfig, train_flag=False, block=0, rng=None):
    dtype = params["role.w"].dtype
    out, _ = attention_fwd(
        np.asarray(q_tokens, dtype=dtype),
        np.asarray(kv_tokens, dtype=dtype),
        params,
        f"blocks.{block}.attn",
        cfg.heads,
        cfg.dropout if _dropout_rng(train_flag, cfg, rng) is not None else 0.0,
        _dropout_rng(train_flag, cfg, rng),
    )
    return out


def joint_decode(z_src, z_tgt, params: Params, cfg: ModelConfig, train_flag=False, rng=None):
    hs, ht, _ = decode_fwd(z_src, z_tgt, params, cfg, _dropout_rng(train_flag, cfg, rng))
    return hs, ht


def interpolate_and_head(h, centers, points, params: Params, cfg: ModelConfig) -> np.ndarray:
    assign = nearest_center(np.asarray(points, dtype=np.float64), np.asarray(centers, dtype=np.float64))
    logits, _ = head_fwd(h, params, cfg)
    return sigmoid(logits)[assign]


def forward(pair: ObjectPair, params: Params, cfg: ModelConfig, train_flag: bool = False, rng=None):
    """Affordance maps (N x K) for source and target of a raw (unnormalized) pair."""
    norm, _ = normalize_pair(pair)
    gs, gt = prepare(norm.source, cfg), prepare(norm.target, cfg)
    pp = forward_geo(gs, gt, params, cfg, _dropout_rng(train_flag, cfg, rng))
    return pp.probs(SOURCE), pp.probs(TARGET)


def bce_loss(pred, gt) -> float:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} vs {gt.shape[0]}")
    return bce_from_probs(pred, gt)
