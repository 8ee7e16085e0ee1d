"""BSEG checkpoint container.

Layout (little endian)::

    b"BSEG" | u32 version | u32 n_entries
    n_entries x ( u16 name_len | name utf-8 | u32 rank | u32 dims[rank] )
    f64 ema_decay | u64 adam_step | u64 n_values
    f32 values[n] | f32 adam_m[n] | f32 adam_v[n] | f32 ema_values[n]
    u32 rng_len | rng state (JSON utf-8) | u32 meta_len | metadata (JSON utf-8)
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .io import atomic_write
from .model import DenoiserParams

__all__ = ["save_checkpoint", "load_checkpoint", "checkpoint_to_bytes", "checkpoint_from_bytes"]

MAGIC = b"BSEG"
VERSION = 1


def checkpoint_to_bytes(params: DenoiserParams, rng_state: dict | None = None, meta: dict | None = None) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(params.shapes))]
    for name, shape in params.shapes:
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack(f"<I{len(shape)}I", len(shape), *shape))
    n = params.values.size
    out.append(struct.pack("<dQQ", params.ema_decay, params.step, n))
    for arr in (params.values, params.adam_m, params.adam_v, params.ema_values):
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    for blob in (rng_state or {}, meta or {}):
        raw = json.dumps(blob, sort_keys=True).encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated checkpoint while reading {what}", self.pos)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def checkpoint_from_bytes(buf: bytes) -> tuple[DenoiserParams, dict, dict]:
    """Returns (params, rng_state, metadata)."""
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    version, n_entries = r.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    shapes = []
    for _ in range(n_entries):
        (name_len,) = r.unpack("<H", "shape table")
        name = r.take(name_len, "shape table").decode("utf-8")
        (rank,) = r.unpack("<I", "shape table")
        shapes.append((name, tuple(r.unpack(f"<{rank}I", "shape table"))))
    ema_decay, step, n = r.unpack("<dQQ", "optimizer header")
    expected = sum(int(np.prod(s)) for _, s in shapes)
    if n != expected:
        raise FormatError(f"value count {n} does not match shape table ({expected})", r.pos - 8)
    arrays = [np.frombuffer(r.take(4 * n, "parameter payload"), dtype="<f4").astype(np.float32) for _ in range(4)]
    blobs = []
    for what in ("rng state", "metadata"):
        (length,) = r.unpack("<I", what)
        blobs.append(json.loads(r.take(length, what).decode("utf-8")))
    if r.pos != len(buf):
        raise FormatError("trailing bytes after checkpoint", r.pos)
    values, adam_m, adam_v, ema = arrays
    params = DenoiserParams(shapes, values, np.zeros_like(values), ema, ema_decay, adam_m, adam_v, int(step))
    return params, blobs[0], blobs[1]


def save_checkpoint(path, params: DenoiserParams, rng_state: dict | None = None, meta: dict | None = None) -> None:
    atomic_write(path, checkpoint_to_bytes(params, rng_state, meta))


def load_checkpoint(path):
    return checkpoint_from_bytes(Path(path).read_bytes())
