"""Versioned binary checkpoints.

Layout (little endian)::

    magic "XQNCKPT\\0" | u32 version | u32 tensor count
    per tensor: u16 name length, name, u8 ndim, u32 dims...
    per tensor: float64 data
    sha256 of everything above (32 bytes)
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

from .network import PARAM_NAMES, NetworkParams, Sizes

MAGIC = b"XQNCKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: NetworkParams) -> bytes:
    head = [MAGIC, struct.pack("<II", VERSION, len(PARAM_NAMES))]
    blobs = []
    for name in PARAM_NAMES:
        arr = params[name]
        raw = name.encode()
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        head.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(head + blobs)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(data: bytes, expect: Sizes | None = None) -> NetworkParams:
    """Parse a checkpoint; ``expect`` rejects layers of different size."""
    if len(data) < len(MAGIC) + 32:
        raise CheckpointError("checkpoint is truncated")
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic bytes)")
    body, digest = data[:-32], data[-32:]
    r = _Reader(body)
    r.take(len(MAGIC))
    version, count = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch (file truncated or corrupted)")
    table = []
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode()
        (ndim,) = r.unpack("<B")
        table.append((name, r.unpack(f"<{ndim}I")))
    arrays = {}
    for name, shape in table:
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(body):
        raise CheckpointError("trailing bytes after tensor data")
    if expect is not None:
        for name, shape in expect.shapes().items():
            got = arrays.get(name)
            if got is None:
                raise CheckpointError(f"layer {name} missing from checkpoint")
            if got.shape != shape:
                raise CheckpointError(f"layer {name}: checkpoint shape {got.shape}, expected {shape}")
    try:
        return NetworkParams(arrays)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc
