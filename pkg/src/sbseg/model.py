"""Denoiser interface, the small reference conv denoiser with analytic gradients, Adam and EMA.

The reference network works on NHWC arrays: the 6 state channels plus one
constant channel holding t, ``depth`` 3x3 conv + SiLU layers of ``width``
channels, and a linear 3x3 conv head back to 6 channels. Zero padding, stride 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .bridge import BridgeState
from .errors import NumericError, ShapeError
from .schedule import NoiseSchedule, sigma_at

__all__ = [
    "Denoiser",
    "DenoiserParams",
    "OracleDenoiser",
    "ReferenceDenoiser",
    "init_params",
    "reference_denoiser_forward",
    "loss_and_grad",
    "adam_step",
    "ema_update",
]


class Denoiser(Protocol):
    def __call__(self, state: BridgeState, t: float) -> np.ndarray: ...


@dataclass
class DenoiserParams:
    shapes: list[tuple[str, tuple[int, ...]]]
    values: np.ndarray
    grads: np.ndarray
    ema_values: np.ndarray
    ema_decay: float = 0.999
    adam_m: np.ndarray = field(default=None)
    adam_v: np.ndarray = field(default=None)
    step: int = 0

    def __post_init__(self):
        if self.adam_m is None:
            self.adam_m = np.zeros_like(self.values)
        if self.adam_v is None:
            self.adam_v = np.zeros_like(self.values)
        n = sum(int(np.prod(s)) for _, s in self.shapes)
        for name in ("values", "grads", "ema_values", "adam_m", "adam_v"):
            if getattr(self, name).shape != (n,):
                raise ShapeError(f"{name} must have length {n}, got {getattr(self, name).shape}")

    @property
    def depth(self) -> int:
        return sum(1 for name, _ in self.shapes if name.startswith("conv") and name.endswith(".weight"))

    @property
    def width(self) -> int:
        return self.shapes[0][1][-1]

    def offsets(self) -> dict[str, tuple[int, int, tuple[int, ...]]]:
        out, pos = {}, 0
        for name, shape in self.shapes:
            size = int(np.prod(shape))
            out[name] = (pos, pos + size, shape)
            pos += size
        return out

    def unflatten(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        return {name: flat[a:b].reshape(shape) for name, (a, b, shape) in self.offsets().items()}

    def astype(self, dtype) -> "DenoiserParams":
        return DenoiserParams(
            list(self.shapes),
            self.values.astype(dtype),
            self.grads.astype(dtype),
            self.ema_values.astype(dtype),
            self.ema_decay,
            self.adam_m.astype(dtype),
            self.adam_v.astype(dtype),
            self.step,
        )


def layer_shapes(width: int = 32, depth: int = 3, in_channels: int = 7, out_channels: int = 6):
    shapes = []
    cin = in_channels
    for i in range(depth):
        shapes.append((f"conv{i}.weight", (3, 3, cin, width)))
        shapes.append((f"conv{i}.bias", (width,)))
        cin = width
    shapes.append(("head.weight", (3, 3, cin, out_channels)))
    shapes.append(("head.bias", (out_channels,)))
    return shapes


def init_params(
    width: int = 32,
    depth: int = 3,
    rng: np.random.Generator | None = None,
    ema_decay: float = 0.999,
    zero: bool = False,
    dtype=np.float32,
) -> DenoiserParams:
    """Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases zero."""
    shapes = layer_shapes(width, depth)
    n = sum(int(np.prod(s)) for _, s in shapes)
    values = np.zeros(n, dtype=np.float64)
    if not zero:
        if rng is None:
            rng = np.random.default_rng(0)
        pos = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            if name.endswith(".weight"):
                fan_in = shape[0] * shape[1] * shape[2]
                bound = np.sqrt(6.0 / fan_in)
                values[pos:pos + size] = rng.uniform(-bound, bound, size)
            pos += size
    values = values.astype(dtype)
    return DenoiserParams(shapes, values, np.zeros_like(values), values.copy(), ema_decay)


def _im2col(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N*H*W, 9*C), zero padded, columns ordered (ky, kx, c)."""
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * h * w, 9 * c)


def _input_grad(dz: np.ndarray, weight: np.ndarray, shape) -> np.ndarray:
    """Gradient w.r.t. a conv input: correlate dz with the spatially flipped kernel."""
    n, h, w, _ = shape
    flipped = weight[::-1, ::-1].transpose(0, 1, 3, 2).reshape(-1, weight.shape[2])
    return (_im2col(dz.reshape(n, h, w, -1)) @ flipped).reshape(shape)


def _sigmoid(z):
    # overflow-free logistic
    return 0.5 * np.tanh(0.5 * z) + 0.5


def _assemble_input(data: np.ndarray, t, dtype) -> np.ndarray:
    data = np.asarray(data)
    if data.ndim == 3:
        data = data[None]
    if data.ndim != 4 or data.shape[-1] != 6:
        raise ShapeError(f"denoiser input must be (N, H, W, 6), got {data.shape}")
    n, h, w, _ = data.shape
    t = np.broadcast_to(np.asarray(t, dtype=dtype).reshape(-1), (n,))
    tchan = np.broadcast_to(t[:, None, None, None], (n, h, w, 1))
    return np.concatenate([data.astype(dtype, copy=False), tchan], axis=-1)


def _check_finite(a, layer):
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite activation in layer {layer}")


def _forward(flat: np.ndarray, params: DenoiserParams, data, t, keep_cache: bool):
    p = params.unflatten(flat)
    x = _assemble_input(data, t, flat.dtype)
    n, h, w, _ = x.shape
    cache = []
    a = x
    for i in range(params.depth):
        wt = p[f"conv{i}.weight"]
        cols = _im2col(a)
        z = cols @ wt.reshape(-1, wt.shape[-1]) + p[f"conv{i}.bias"]
        s = _sigmoid(z)
        out = z * s
        _check_finite(out, i)
        if keep_cache:
            cache.append((cols, z, s, a.shape))
        a = out.reshape(n, h, w, -1)
    wt = p["head.weight"]
    cols = _im2col(a)
    y = cols @ wt.reshape(-1, wt.shape[-1]) + p["head.bias"]
    _check_finite(y, params.depth)
    if keep_cache:
        cache.append((cols, None, None, a.shape))
    return y.reshape(n, h, w, -1), cache


def reference_denoiser_forward(params: DenoiserParams, state: BridgeState | np.ndarray, t=None, use_ema: bool = False):
    """eps prediction with the same shape as the state data."""
    if isinstance(state, BridgeState):
        data = state.data
        t = state.t if t is None else t
    else:
        data = np.asarray(state)
    flat = params.ema_values if use_ema else params.values
    y, _ = _forward(flat, params, data, t, keep_cache=False)
    return y[0] if np.ndim(data) == 3 else y


def loss_and_grad(params: DenoiserParams, xt: np.ndarray, t, target: np.ndarray) -> float:
    """Mean squared error over every element of the batch; gradient written to ``params.grads``."""
    xt = np.asarray(xt)
    target = np.asarray(target)
    if xt.ndim == 3:
        xt, target = xt[None], target[None]
    if xt.shape != target.shape:
        raise ShapeError(f"batch states {xt.shape} and targets {target.shape} differ")
    dtype = params.values.dtype
    y, cache = _forward(params.values, params, xt, t, keep_cache=True)
    diff = y - target.astype(dtype, copy=False)
    count = diff.size
    loss = float(np.sum(np.square(diff, dtype=np.float64)) / count)

    p = params.unflatten(params.values)
    g = params.unflatten(params.grads)
    dy = (diff * dtype.type(2.0 / count)).reshape(-1, diff.shape[-1])

    cols, _, _, shape = cache[-1]
    wt = p["head.weight"]
    g["head.weight"][...] = (cols.T @ dy).reshape(wt.shape)
    g["head.bias"][...] = dy.sum(axis=0)
    da = _input_grad(dy, wt, shape)
    for i in range(params.depth - 1, -1, -1):
        cols, z, s, shape = cache[i]
        dz = da.reshape(z.shape) * (s * (1 + z * (1 - s)))
        wt = p[f"conv{i}.weight"]
        g[f"conv{i}.weight"][...] = (cols.T @ dz).reshape(wt.shape)
        g[f"conv{i}.bias"][...] = dz.sum(axis=0)
        if i > 0:
            da = _input_grad(dz, wt, shape)
    return loss


def adam_step(
    params: DenoiserParams,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_hat: float = 1e-8,
    step_index: int | None = None,
) -> DenoiserParams:
    """Bias-corrected Adam update in place; moment buffers live on ``params``."""
    g = params.grads
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient passed to adam_step")
    k = params.step + 1 if step_index is None else int(step_index)
    params.adam_m *= beta1
    params.adam_m += (1 - beta1) * g
    params.adam_v *= beta2
    params.adam_v += (1 - beta2) * (g * g)
    m_hat = params.adam_m / (1 - beta1 ** k)
    v_hat = params.adam_v / (1 - beta2 ** k)
    params.values -= (lr * m_hat / (np.sqrt(v_hat) + eps_hat)).astype(params.values.dtype, copy=False)
    params.step = k
    return params


def ema_update(params: DenoiserParams) -> np.ndarray:
    d = params.ema_decay
    params.ema_values *= d
    params.ema_values += (1 - d) * params.values
    return params.ema_values


class ReferenceDenoiser:
    """Callable wrapper; uses the EMA weights unless told otherwise."""

    def __init__(self, params: DenoiserParams, use_ema: bool = True):
        self.params = params
        self.use_ema = use_ema

    def __call__(self, state: BridgeState, t: float) -> np.ndarray:
        return reference_denoiser_forward(self.params, state.data, t, use_ema=self.use_ema)


class OracleDenoiser:
    """Returns the exact target (X_t - X_0) / sigma_t for a known X_0."""

    def __init__(self, x0: np.ndarray, schedule: NoiseSchedule):
        self.x0 = np.asarray(x0)
        self.schedule = schedule

    def __call__(self, state: BridgeState, t: float) -> np.ndarray:
        sigma, _ = sigma_at(self.schedule, t)
        return (state.data - self.x0) / sigma
