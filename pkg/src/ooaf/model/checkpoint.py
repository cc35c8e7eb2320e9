"""Checkpoint files and the patch-embedding export.

Checkpoint layout::

    OOAF-CKPT 1\\n
    <config as one line of JSON>\\n
    then per tensor: "<name> <rank> <dim>...\\n" followed by little-endian float32 data
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import ObjectPair, normalize_pair
from .config import ModelConfig
from .network import SOURCE, TARGET, Params, param_shapes, prepare, tokenize_fwd

MAGIC = b"OOAF-CKPT 1"
EMB_MAGIC = "ooaf-emb 1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: Params, cfg: ModelConfig) -> None:
    shapes = param_shapes(cfg)
    missing = set(shapes) - set(params)
    if missing:
        raise CheckpointError(f"parameters missing: {sorted(missing)}")
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(json.dumps(cfg.to_dict(), sort_keys=True).encode() + b"\n")
        for name in shapes:
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"{name} {arr.ndim} {dims}\n".encode())
            fh.write(arr.tobytes())


def _readline(buf: bytes, pos: int, what: str) -> tuple[str, int]:
    end = buf.find(b"\n", pos)
    if end < 0:
        raise CheckpointError(f"truncated checkpoint: missing {what}")
    return buf[pos:end].decode("utf-8"), end + 1


def load_checkpoint(path, dtype=None) -> tuple[Params, ModelConfig]:
    buf = Path(path).read_bytes()
    magic, pos = _readline(buf, 0, "magic")
    if magic.encode() != MAGIC:
        raise CheckpointError(f"{path}: not an OOAF checkpoint (magic {magic[:20]!r})")
    line, pos = _readline(buf, pos, "config")
    try:
        cfg = ModelConfig.from_dict(json.loads(line))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad config block: {exc}") from exc
    dtype = np.dtype(dtype or cfg.dtype)
    shapes = param_shapes(cfg)
    params: Params = {}
    while pos < len(buf):
        header, pos = _readline(buf, pos, "tensor header")
        fields = header.split()
        if len(fields) < 2:
            raise CheckpointError(f"{path}: malformed tensor header {header!r}")
        name, rank = fields[0], int(fields[1])
        dims = tuple(int(d) for d in fields[2:])
        if len(dims) != rank:
            raise CheckpointError(f"{path}: tensor {name} declares rank {rank} but lists {len(dims)} dims")
        if name not in shapes:
            raise CheckpointError(f"{path}: unexpected tensor {name}")
        if dims != tuple(shapes[name]):
            raise CheckpointError(f"{path}: tensor {name} has shape {dims}, config expects {shapes[name]}")
        nbytes = 4 * int(np.prod(dims, dtype=np.int64))
        if pos + nbytes > len(buf):
            raise CheckpointError(f"{path}: truncated data for tensor {name}")
        params[name] = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=pos).reshape(dims).astype(dtype)
        pos += nbytes
    missing = set(shapes) - set(params)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    return params, cfg


def patch_embeddings(pair: ObjectPair, params: Params, cfg: ModelConfig):
    """Post-encoder tokens of both objects with the part label of each patch center."""
    norm, _ = normalize_pair(pair)
    rows, parts = [], []
    for role, cloud in ((SOURCE, norm.source), (TARGET, norm.target)):
        geo = prepare(cloud, cfg)
        z, _ = tokenize_fwd(geo, role, params, cfg)
        rows.append(np.asarray(z, dtype=np.float64))
        if cloud.part_labels is None:
            parts.append(np.full(len(geo.center_idx), -1, dtype=np.int64))
        else:
            parts.append(np.asarray(cloud.part_labels)[geo.center_idx])
    return np.vstack(rows), np.concatenate(parts)


def dump_patch_embeddings(pairs: Sequence[ObjectPair], params: Params, cfg: ModelConfig, path) -> int:
    """Write one text row per patch: embedding values, part label, category id. Returns the row count."""
    blocks = []
    for pair in pairs:
        emb, parts = patch_embeddings(pair, params, cfg)
        blocks.append((emb, parts, pair.category.id))
    total = sum(len(b[0]) for b in blocks)
    with open(path, "w") as fh:
        fh.write(f"{EMB_MAGIC} {total} {cfg.token_dim}\n")
        for emb, parts, cat in blocks:
            for vec, part in zip(emb, parts):
                fh.write(" ".join(format(float(v), ".9g") for v in vec))
                fh.write(f" {int(part)} {int(cat)}\n")
    return total


def load_embeddings(path):
    """(embeddings R x D, part labels, category ids) from a dump file."""
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != EMB_MAGIC.split():
            raise ValueError(f"{path}: not an embedding dump")
        rows, dim = int(header[2]), int(header[3])
        data = np.loadtxt(fh, ndmin=2) if rows else np.zeros((0, dim + 2))
    if data.shape != (rows, dim + 2):
        raise ValueError(f"{path}: expected {rows} x {dim + 2} values, got {data.shape}")
    return data[:, :dim], data[:, dim].astype(np.int64), data[:, dim + 1].astype(np.int64)
