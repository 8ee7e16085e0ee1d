"""On-disk formats: BSGT tensor files, 8-bit RGB images, 16-bit label maps.

BSGT layout (little endian)::

    b"BSGT" | u32 version | u32 rank | u64 dims[rank] | float32 payload (row major)
"""
from __future__ import annotations

import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ShapeError

__all__ = [
    "atomic_write",
    "write_tensor",
    "read_tensor",
    "tensor_to_bytes",
    "tensor_from_bytes",
    "write_rgb",
    "read_rgb",
    "write_label_map",
    "read_label_map",
    "write_binary_mask",
]

TENSOR_MAGIC = b"BSGT"
TENSOR_VERSION = 1
MAX_LABEL = 65535


def atomic_write(path, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim < 2:
        raise ShapeError(f"tensor files need rank >= 2, got rank {arr.ndim}")
    header = TENSOR_MAGIC + struct.pack("<II", TENSOR_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 12:
        raise FormatError("truncated header", len(buf))
    if buf[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0)
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != TENSOR_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if rank < 2:
        raise FormatError(f"rank must be >= 2, got {rank}", 8)
    dims_end = 12 + 8 * rank
    if len(buf) < dims_end:
        raise FormatError("truncated dimension table", len(buf))
    dims = struct.unpack_from(f"<{rank}Q", buf, 12)
    expected = dims_end + 4 * int(np.prod(dims, dtype=np.uint64))
    if len(buf) != expected:
        raise FormatError(f"payload size mismatch: expected {expected} bytes, got {len(buf)}", min(len(buf), expected))
    return np.frombuffer(buf, dtype="<f4", offset=dims_end).reshape(dims).astype(np.float32)


def write_tensor(path, arr: np.ndarray) -> None:
    atomic_write(path, tensor_to_bytes(arr))


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def _png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_rgb(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[-1] != 3 or rgb.dtype != np.uint8:
        raise ShapeError(f"expected uint8 (H, W, 3), got {rgb.dtype} {rgb.shape}")
    atomic_write(path, _png_bytes(Image.fromarray(rgb)))


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_label_map(path, labels: np.ndarray) -> None:
    """16-bit single channel PNG; ids above 65535 cannot be stored."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError(f"label map must be 2-D, got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > MAX_LABEL):
        raise ShapeError(f"label ids must lie in [0, {MAX_LABEL}]")
    atomic_write(path, _png_bytes(Image.fromarray(labels.astype(np.uint16))))


def read_label_map(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise FormatError(f"{path}: label map must be single channel, got shape {arr.shape}", 0)
    return arr.astype(np.int32)


def write_binary_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=bool)
    atomic_write(path, _png_bytes(Image.fromarray((mask * 255).astype(np.uint8))))
