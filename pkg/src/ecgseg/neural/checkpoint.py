"""Flat binary checkpoint container.

Layout (all integers little-endian)::

    magic        8 bytes   b"ECGSEGCK"
    version      u32       1
    spec_len     u32       length of the UTF-8 JSON architecture record
    spec         bytes     ModelSpec as JSON
    n_tensors    u32
    n_tensors x:
        name_len u32
        name     bytes     UTF-8, e.g. "conv1.weight" or "bn1.running_mean"
        rank     u32
        dims     rank x u64
        data     prod(dims) x float64 (little-endian, C order)

Learnable tensors and batch-norm running statistics are both stored; only the
learnable ones count toward the parameter total that the loader checks.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, IoFailure
from .model import TOTAL_PARAMS, ModelParams, ModelSpec

MAGIC = b"ECGSEGCK"
VERSION = 1


def dumps(params: ModelParams) -> bytes:
    spec = json.dumps(params.spec.to_dict(), sort_keys=True).encode("utf-8")
    tensors = list(params.weights.items()) + list(params.buffers.items())
    parts = [MAGIC, struct.pack("<II", VERSION, len(spec)), spec, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes, expect_total: int | None = TOTAL_PARAMS) -> ModelParams:
    """Parse a checkpoint; ``expect_total=None`` skips the parameter-count check."""
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    version, spec_len = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        spec = ModelSpec.from_dict(json.loads(r.take(spec_len).decode("utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"bad architecture record: {exc}") from None
    (n,) = r.unpack("<I")
    tensors = {}
    for _ in range(n):
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<I")
        dims = r.unpack(f"<{rank}Q") if rank else ()
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(dims).astype(np.float64)
        tensors[name] = arr
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after last tensor")
    params = ModelParams.zeros(spec)
    for group, shapes in (("weights", spec.shapes()), ("buffers", spec.buffer_shapes())):
        target = getattr(params, group)
        for name, shape in shapes.items():
            if name not in tensors:
                raise CheckpointError(f"missing tensor {name!r}")
            if tensors[name].shape != tuple(shape):
                raise CheckpointError(f"tensor {name!r} has shape {tensors[name].shape}, expected {shape}")
            target[name] = tensors.pop(name).copy()
    if tensors:
        raise CheckpointError(f"unexpected tensors {sorted(tensors)}")
    if expect_total is not None and params.count() != expect_total:
        raise CheckpointError(f"checkpoint has {params.count()} learnable parameters, expected {expect_total}")
    if any(np.any(v <= 0) for k, v in params.buffers.items() if k.endswith("running_var")):
        raise CheckpointError("running variances must be positive")
    return params


def save(params: ModelParams, path) -> None:
    try:
        Path(path).write_bytes(dumps(params))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load(path, expect_total: int | None = TOTAL_PARAMS) -> ModelParams:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return loads(data, expect_total)
