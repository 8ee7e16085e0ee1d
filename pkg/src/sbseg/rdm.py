"""Reverse distance maps: per-instance exact EDT, normalized and inverted."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import MissingInstanceError, ShapeError

__all__ = ["squared_edt", "instance_edt", "reverse_distance_map"]

_INF = np.float64(1e20)


def _envelope_1d(f: np.ndarray) -> np.ndarray:
    """min_q ((p - q)^2 + f[q]) for every p, via the lower envelope of parabolas."""
    n = f.shape[0]
    d = np.empty(n, dtype=np.float64)
    v = np.zeros(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
                continue
            break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


def squared_edt(inside: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from each pixel to the nearest ``False`` pixel.

    ``inside`` must contain at least one False pixel; callers pad with a
    background frame so that holds.
    """
    inside = np.asarray(inside, dtype=bool)
    h, w = inside.shape
    # column pass: 1-D distance to the nearest outside pixel
    g = np.where(inside, _INF, 0.0)
    for i in range(1, h):
        g[i] = np.minimum(g[i], g[i - 1] + 1.0)
    for i in range(h - 2, -1, -1):
        g[i] = np.minimum(g[i], g[i + 1] + 1.0)
    f = np.where(g >= _INF, _INF, g * g)
    out = np.empty_like(f)
    for i in range(h):
        out[i] = _envelope_1d(f[i]) if inside[i].any() else 0.0
    return out


def _window(slc):
    # slc indexes the 1-px padded label map; widen by one ring of (virtual) background
    r, c = slc
    return slice(r.start - 1, r.stop + 1), slice(c.start - 1, c.stop + 1)


def _padded(labels):
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError(f"label map must be 2-D, got shape {labels.shape}")
    return np.pad(labels, 1, mode="constant", constant_values=0)


def _instance_distance(padded, k, slc):
    window = _window(slc)
    inside = padded[window] == k
    return window, np.sqrt(squared_edt(inside)), inside


def instance_edt(labels: np.ndarray, k: int) -> np.ndarray:
    """Distance from each pixel of instance ``k`` to the nearest pixel not in ``k``.

    The image border counts as non-instance. Zero outside the instance.
    """
    padded = _padded(labels)
    objects = ndimage.find_objects((padded == k).astype(np.int32))
    if k <= 0 or not objects or objects[0] is None:
        raise MissingInstanceError(f"instance {k} not present in label map")
    window, dist, inside = _instance_distance(padded, k, objects[0])
    out = np.zeros(padded.shape, dtype=np.float64)
    out[window][inside] = dist[inside]
    return out[1:-1, 1:-1]


def reverse_distance_map(labels: np.ndarray) -> np.ndarray:
    """Per-instance (d_max - d) / d_max, max-aggregated; background 0.

    Instances whose distances are all equal (d_max == d_min, e.g. single pixels
    or one-pixel-wide lines) map to 1.
    """
    padded = _padded(labels)
    out = np.zeros(padded.shape, dtype=np.float64)
    if padded.max(initial=0) <= 0:
        return out[1:-1, 1:-1]
    for idx, slc in enumerate(ndimage.find_objects(np.clip(padded, 0, None).astype(np.int64))):
        if slc is None:
            continue
        k = idx + 1
        window, dist, inside = _instance_distance(padded, k, slc)
        d = dist[inside]
        d_max, d_min = d.max(), d.min()
        r = (d_max - d) / d_max if d_max > d_min else np.ones_like(d)
        region = out[window]
        region[inside] = np.maximum(region[inside], r)
    return out[1:-1, 1:-1]
