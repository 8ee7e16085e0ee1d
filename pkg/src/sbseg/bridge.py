"""Closed-form bridge posterior, training target and the reverse-step recursion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .schedule import NoiseSchedule

__all__ = [
    "BridgeState",
    "posterior_params",
    "sample_xt",
    "training_target",
    "predict_x0",
    "reverse_step",
]

N_CHANNELS = 6


@dataclass
class BridgeState:
    """A 6-channel state tagged with its time.

    ``data`` has shape (H, W, 6), or (N, H, W, 6) for a batch sharing one time.
    """

    data: np.ndarray
    t: float

    def __post_init__(self):
        if self.data.ndim < 3 or self.data.shape[-1] != N_CHANNELS:
            raise ShapeError(f"bridge state needs {N_CHANNELS} trailing channels, got shape {self.data.shape}")
        if not (0.0 <= self.t <= 1.0):
            raise DomainError(f"state time must lie in [0, 1], got {self.t!r}")


def _check_same(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def posterior_params(x0, x1, t, schedule: NoiseSchedule):
    """Mean and isotropic variance of q(X_t | X_0, X_1)."""
    x0 = np.asarray(x0)
    x1 = np.asarray(x1)
    _check_same(x0, x1, "posterior_params")
    fwd, bwd = schedule.variances_at(t)
    total = fwd + bwd
    if fwd == 0.0:
        return x0.copy(), 0.0
    if bwd == 0.0:
        return x1.copy(), 0.0
    mu = (bwd / total) * x0 + (fwd / total) * x1
    return mu, fwd * bwd / total


def sample_xt(x0, x1, t, schedule: NoiseSchedule, rng: np.random.Generator) -> BridgeState:
    mu, var = posterior_params(x0, x1, t, schedule)
    if var > 0.0:
        z = rng.standard_normal(mu.shape)
        mu = mu + np.sqrt(var) * z
    return BridgeState(mu.astype(np.result_type(x0, x1), copy=False), t)


def _sigma_fwd(schedule, t):
    fwd, _ = schedule.variances_at(t)
    return np.sqrt(fwd)


def training_target(xt: BridgeState, x0, schedule: NoiseSchedule):
    """(X_t - X_0) / sigma_t."""
    _check_same(xt.data, np.asarray(x0), "training_target")
    sigma = _sigma_fwd(schedule, xt.t)
    if sigma == 0.0:
        raise DomainError("training target is undefined at t=0 (sigma_t = 0); sample t from (0, 1]")
    return (xt.data - x0) / sigma


def predict_x0(xt: BridgeState, eps, schedule: NoiseSchedule):
    eps = np.asarray(eps)
    _check_same(xt.data, eps, "predict_x0")
    return xt.data - _sigma_fwd(schedule, xt.t) * eps


def reverse_step(
    xt: BridgeState,
    x0hat,
    s: float,
    schedule: NoiseSchedule,
    deterministic: bool = True,
    rng: np.random.Generator | None = None,
) -> BridgeState:
    """Move from time ``xt.t`` to ``s`` < t along the sub-bridge between x0hat and xt.

    With a^2 = sigma_s^2 and b^2 = sigma_t^2 - sigma_s^2 the mean is
    (b^2 x0hat + a^2 x_t) / (a^2 + b^2); noise of variance a^2 b^2 / (a^2 + b^2)
    is added only when ``deterministic`` is false.
    """
    x0hat = np.asarray(x0hat)
    _check_same(xt.data, x0hat, "reverse_step")
    if not (0.0 <= s < xt.t):
        raise DomainError(f"reverse step needs 0 <= s < t, got s={s!r}, t={xt.t!r}")
    if not deterministic and rng is None:
        raise DomainError("stochastic reverse step requires an rng")
    a2, _ = schedule.variances_at(s)
    t2, _ = schedule.variances_at(xt.t)
    if a2 == 0.0:
        return BridgeState(x0hat.copy(), s)
    b2 = t2 - a2
    total = a2 + b2
    mean = (b2 / total) * x0hat + (a2 / total) * xt.data
    if not deterministic:
        mean = mean + np.sqrt(a2 * b2 / total) * rng.standard_normal(mean.shape)
    return BridgeState(mean.astype(xt.data.dtype, copy=False), s)
