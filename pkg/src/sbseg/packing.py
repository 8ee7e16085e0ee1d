"""Channel duplication between 3-channel images / mask+RDM targets and 6-channel states.

All endpoint channels live in [-1, 1]: images as v/127.5 - 1, the binary mask as
{-1, +1}, and the [0, 1] reverse distance map as 2r - 1.
"""
from __future__ import annotations

import numpy as np

from .bridge import BridgeState
from .errors import ShapeError

__all__ = [
    "encode_image",
    "encode_mask",
    "encode_rdm",
    "pack_input",
    "pack_target",
    "unpack_prediction",
]


def encode_image(rgb: np.ndarray) -> np.ndarray:
    """uint8 RGB (..., H, W, 3) -> float32 in [-1, 1]."""
    rgb = np.asarray(rgb)
    if rgb.ndim < 3 or rgb.shape[-1] != 3:
        raise ShapeError(f"expected an RGB image (..., H, W, 3), got {rgb.shape}")
    return (rgb.astype(np.float32) / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def encode_mask(mask: np.ndarray) -> np.ndarray:
    """Boolean (..., H, W) -> (..., H, W, 1) with values in {-1, +1}."""
    return np.where(np.asarray(mask, dtype=bool), 1.0, -1.0).astype(np.float32)[..., None]


def encode_rdm(rdm: np.ndarray) -> np.ndarray:
    """[0, 1] map (..., H, W) -> (..., H, W, 1) in [-1, 1]."""
    rdm = np.asarray(rdm, dtype=np.float32)
    return (np.float32(2.0) * rdm - np.float32(1.0))[..., None]


def pack_input(img: np.ndarray) -> BridgeState:
    """X_1 = (img, img)."""
    img = np.asarray(img)
    if img.ndim < 3 or img.shape[-1] != 3:
        raise ShapeError(f"encoded image needs 3 channels, got shape {img.shape}")
    return BridgeState(np.concatenate([img, img], axis=-1), 1.0)


def pack_target(mask: np.ndarray, rdm: np.ndarray) -> BridgeState:
    """X_0 = (M, M, M, R, R, R) from encoded (..., H, W, 1) mask and rdm."""
    mask = np.asarray(mask)
    rdm = np.asarray(rdm)
    if mask.shape != rdm.shape:
        raise ShapeError(f"mask {mask.shape} and rdm {rdm.shape} differ")
    if mask.shape[-1] != 1:
        raise ShapeError(f"mask and rdm need a single trailing channel, got {mask.shape}")
    return BridgeState(np.concatenate([mask, mask, mask, rdm, rdm, rdm], axis=-1), 0.0)


def unpack_prediction(state: BridgeState | np.ndarray):
    """Average each channel triple, map [-1, 1] -> [0, 1], then clamp.

    Returns (mask_prob, rdm_pred), each (..., H, W, 1) float32.
    """
    data = state.data if isinstance(state, BridgeState) else np.asarray(state)
    if data.shape[-1] != 6:
        raise ShapeError(f"prediction needs 6 channels, got shape {data.shape}")
    # float64 sum keeps the mean of three equal float32 values exact
    d = data.astype(np.float64)
    mask = d[..., 0:3].sum(axis=-1, keepdims=True) / 3.0
    rdm = d[..., 3:6].sum(axis=-1, keepdims=True) / 3.0
    mask_prob = np.clip((mask + 1.0) / 2.0, 0.0, 1.0).astype(np.float32)
    rdm_pred = np.clip((rdm + 1.0) / 2.0, 0.0, 1.0).astype(np.float32)
    return mask_prob, rdm_pred
