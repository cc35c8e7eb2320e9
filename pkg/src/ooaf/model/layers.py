"""Forward/backward pairs for the few layers the network needs.

Every ``*_fwd`` returns ``(out, cache)`` and the matching ``*_bwd`` takes the
upstream gradient and the cache, returns the input gradient and accumulates
parameter gradients into ``grads`` in place.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return cdf + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def linear_fwd(x, params, name):
    return x @ params[name + ".w"] + params[name + ".b"], x


def linear_bwd(dy, x, params, grads, name):
    w = params[name + ".w"]
    grads[name + ".w"] += x.reshape(-1, w.shape[0]).T @ dy.reshape(-1, w.shape[1])
    grads[name + ".b"] += dy.reshape(-1, w.shape[1]).sum(axis=0)
    return dy @ w.T


def layernorm_fwd(x, params, name, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * params[name + ".g"] + params[name + ".b"], (xhat, inv)


def layernorm_bwd(dy, cache, params, grads, name):
    xhat, inv = cache
    grads[name + ".g"] += (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    grads[name + ".b"] += dy.reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * params[name + ".g"]
    d = xhat.shape[-1]
    return inv / d * (d * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))


def mlp_fwd(x, params, prefix, n_layers):
    """Linear layers ``prefix.0 .. prefix.{n-1}`` with GELU between them (not after the last)."""
    caches = []
    h = x
    for i in range(n_layers):
        z, xin = linear_fwd(h, params, f"{prefix}.{i}")
        caches.append((xin, z))
        h = gelu(z) if i < n_layers - 1 else z
    return h, caches


def mlp_bwd(dy, caches, params, grads, prefix):
    n_layers = len(caches)
    for i in reversed(range(n_layers)):
        xin, z = caches[i]
        if i < n_layers - 1:
            dy = dy * gelu_grad(z)
        dy = linear_bwd(dy, xin, params, grads, f"{prefix}.{i}")
    return dy


def softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def split_heads(x, heads):
    t, d = x.shape
    return x.reshape(t, heads, d // heads).transpose(1, 0, 2)


def merge_heads(x):
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def attention_fwd(xq, xkv, params, name, heads, dropout=0.0, rng=None):
    """Multi-head scaled dot-product attention of ``xq`` rows over ``xkv`` rows."""
    q, _ = linear_fwd(xq, params, name + ".q")
    k, _ = linear_fwd(xkv, params, name + ".k")
    v, _ = linear_fwd(xkv, params, name + ".v")
    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    scale = 1.0 / math.sqrt(qh.shape[-1])
    probs = softmax(qh @ kh.transpose(0, 2, 1) * scale)
    mask = None
    dropped = probs
    if dropout > 0.0 and rng is not None:
        mask = (rng.random(probs.shape) >= dropout).astype(probs.dtype) / (1.0 - dropout)
        dropped = probs * mask
    ctx = merge_heads(dropped @ vh)
    out, _ = linear_fwd(ctx, params, name + ".o")
    return out, (xq, xkv, qh, kh, vh, probs, mask, dropped, ctx, scale)


def attention_probs(xq, xkv, params, name, heads):
    q, _ = linear_fwd(xq, params, name + ".q")
    k, _ = linear_fwd(xkv, params, name + ".k")
    qh, kh = split_heads(q, heads), split_heads(k, heads)
    return softmax(qh @ kh.transpose(0, 2, 1) / math.sqrt(qh.shape[-1]))


def attention_bwd(dout, cache, params, grads, name):
    xq, xkv, qh, kh, vh, probs, mask, dropped, ctx, scale = cache
    heads = qh.shape[0]
    dctx = linear_bwd(dout, ctx, params, grads, name + ".o")
    dctx_h = split_heads(dctx, heads)
    dvh = dropped.transpose(0, 2, 1) @ dctx_h
    ddrop = dctx_h @ vh.transpose(0, 2, 1)
    dprobs = ddrop * mask if mask is not None else ddrop
    ds = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    ds *= scale
    dqh = ds @ kh
    dkh = ds.transpose(0, 2, 1) @ qh
    dxq = linear_bwd(merge_heads(dqh), xq, params, grads, name + ".q")
    dxkv = linear_bwd(merge_heads(dkh), xkv, params, grads, name + ".k")
    dxkv = dxkv + linear_bwd(merge_heads(dvh), xkv, params, grads, name + ".v")
    return dxq, dxkv
