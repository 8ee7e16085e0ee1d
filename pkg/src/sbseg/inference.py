"""Deterministic reverse generation from an encoded image to mask / RDM predictions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bridge import BridgeState, predict_x0, reverse_step
from .errors import DenoiserError, NumericError, ShapeError
from .instances import binarize, connected_components, rvdist_to_mask
from .packing import pack_input, unpack_prediction
from .schedule import NoiseSchedule

__all__ = ["GenerateResult", "generate", "generate_state", "segment"]


@dataclass
class GenerateResult:
    mask_prob: np.ndarray
    rdm_pred: np.ndarray
    final_state: np.ndarray
    trajectory: list[tuple[int, float, np.ndarray]] = field(default_factory=list)


def generate_state(x1: BridgeState, denoiser, schedule: NoiseSchedule, dump_every: int | None = None):
    """Walk the grid from t=1 to t=0 with noise disabled.

    Returns (final_state, trajectory); the trajectory holds (step, t, state)
    after every ``dump_every``-th step.
    """
    state = x1
    trajectory = []
    grid = schedule.t_grid
    n = schedule.n_steps
    for step in range(1, n + 1):
        t = float(grid[n - step + 1])
        s = float(grid[n - step])
        try:
            eps = denoiser(state, t)
        except Exception as exc:
            raise DenoiserError(f"denoiser failed at step {step} (t={t:.4f}): {exc}", step) from exc
        eps = np.asarray(eps)
        if eps.shape != state.data.shape:
            raise ShapeError(f"step {step}: denoiser returned {eps.shape}, expected {state.data.shape}")
        x0hat = predict_x0(state, eps, schedule)
        state = reverse_step(state, x0hat, s, schedule, deterministic=True)
        if not np.all(np.isfinite(state.data)):
            raise NumericError(f"non-finite state after reverse step {step} (t={s:.4f})")
        if dump_every and step % dump_every == 0:
            trajectory.append((step, s, state.data.copy()))
    return state, trajectory


def generate(img: np.ndarray, denoiser, schedule: NoiseSchedule, dump_every: int | None = None) -> GenerateResult:
    """``img`` is an encoded (H, W, 3) image or an (N, H, W, 3) batch."""
    final, trajectory = generate_state(pack_input(img), denoiser, schedule, dump_every)
    mask_prob, rdm_pred = unpack_prediction(final)
    return GenerateResult(mask_prob, rdm_pred, final.data, trajectory)


def segment(mask_prob: np.ndarray, rdm_pred: np.ndarray, task: str = "multi") -> np.ndarray:
    """Instance labels from one prediction; the rvdist task reads the RDM channels."""
    if task == "rvdist":
        mask = rvdist_to_mask(rdm_pred[..., 0] if rdm_pred.ndim == 3 else rdm_pred)
    else:
        mask = binarize(mask_prob)
    return connected_components(mask)
