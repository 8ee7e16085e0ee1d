"""Symmetric (triangular) noise schedule with closed-form variance accumulators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

__all__ = ["NoiseSchedule", "build_schedule", "sigma_at"]


@dataclass(frozen=True)
class NoiseSchedule:
    n_steps: int
    beta_max: float
    beta_min: float
    t_grid: np.ndarray
    beta: np.ndarray
    sigma2_fwd: np.ndarray
    sigma2_bwd: np.ndarray

    @property
    def total_variance(self) -> float:
        return 0.5 * (self.beta_max + self.beta_min)

    def variances_at(self, t: float) -> tuple[float, float]:
        """Interpolated (sigma_t^2, sigma_bar_t^2); exact on grid points."""
        if not (0.0 <= t <= 1.0):
            raise DomainError(f"t must lie in [0, 1], got {t!r}")
        pos = t * self.n_steps
        i = min(int(math.floor(pos)), self.n_steps - 1)
        w = pos - i
        if w == 0.0:
            return float(self.sigma2_fwd[i]), float(self.sigma2_bwd[i])
        fwd = (1.0 - w) * self.sigma2_fwd[i] + w * self.sigma2_fwd[i + 1]
        bwd = (1.0 - w) * self.sigma2_bwd[i] + w * self.sigma2_bwd[i + 1]
        return float(fwd), float(bwd)


def _ramp_integral(t, beta_min, beta_max):
    # integral of beta over [0, t] for t <= 0.5, where beta rises linearly to beta_max at 0.5
    return beta_min * t + (beta_max - beta_min) * t * t


def _integral_from_zero(t, beta_min, beta_max):
    t = np.asarray(t, dtype=np.float64)
    half = 0.5 * (beta_max + beta_min)
    lower = _ramp_integral(np.minimum(t, 0.5), beta_min, beta_max)
    upper = half - _ramp_integral(np.minimum(1.0 - t, 0.5), beta_min, beta_max)
    return np.where(t <= 0.5, lower, upper)


def _triangle(t, beta_min, beta_max):
    return beta_min + (beta_max - beta_min) * (1.0 - np.abs(2.0 * t - 1.0))


def build_schedule(n_steps: int = 50, beta_max: float = 0.3, beta_min: float = 1e-4) -> NoiseSchedule:
    """Triangular beta profile: ``beta_min`` at t=0 and t=1, ``beta_max`` at t=0.5.

    The accumulators are evaluated from the closed-form integral of the
    piecewise-linear profile. The backward accumulator is the forward one
    mirrored, so the symmetry holds to roundoff.
    """
    if isinstance(n_steps, bool) or not isinstance(n_steps, (int, np.integer)) or n_steps < 1:
        raise ConfigError("schedule.n_steps", f"must be a positive integer, got {n_steps!r}")
    for name, value in (("schedule.beta_max", beta_max), ("schedule.beta_min", beta_min)):
        if not math.isfinite(value) or value < 0:
            raise ConfigError(name, f"must be finite and non-negative, got {value!r}")
    if beta_max <= 0:
        raise ConfigError("schedule.beta_max", f"must be positive, got {beta_max!r}")
    if beta_min > beta_max:
        raise ConfigError("schedule.beta_min", f"must not exceed beta_max ({beta_max}), got {beta_min!r}")

    n = int(n_steps)
    t_grid = np.arange(n + 1, dtype=np.float64) / n
    mids = (np.arange(n, dtype=np.float64) + 0.5) / n
    beta = _triangle(mids, beta_min, beta_max)
    fwd = _integral_from_zero(t_grid, beta_min, beta_max)
    bwd = _integral_from_zero(t_grid[::-1], beta_min, beta_max)
    fwd[0] = 0.0
    bwd[-1] = 0.0
    for arr in (t_grid, beta, fwd, bwd):
        arr.setflags(write=False)
    return NoiseSchedule(n, float(beta_max), float(beta_min), t_grid, beta, fwd, bwd)


def sigma_at(schedule: NoiseSchedule, t: float) -> tuple[float, float]:
    """Return (sigma_t, sigma_bar_t) at time ``t``."""
    fwd, bwd = schedule.variances_at(t)
    return math.sqrt(fwd), math.sqrt(bwd)
