"""Bridge training loop for the reference denoiser."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bridge import sample_xt, training_target
from .checkpoint import save_checkpoint
from .config import RunConfig
from .data import Dataset
from .errors import ConfigError, ShapeError
from .io import atomic_write
from .model import DenoiserParams, adam_step, ema_update, init_params, loss_and_grad
from .packing import encode_image, encode_mask, encode_rdm, pack_input, pack_target
from .schedule import NoiseSchedule, build_schedule

log = logging.getLogger(__name__)

__all__ = ["TrainResult", "build_targets", "schedule_from_config", "train", "smoothed", "write_loss_csv"]


@dataclass
class TrainResult:
    params: DenoiserParams
    losses: list[float]
    schedule: NoiseSchedule


def schedule_from_config(config: RunConfig) -> NoiseSchedule:
    return build_schedule(config["schedule.n_steps"], config["schedule.beta_max"], config["schedule.beta_min"])


def build_targets(labels: np.ndarray, rdms: np.ndarray, task: str = "multi") -> np.ndarray:
    """Endpoint X_0 per task mode.

    multi: (M, M, M, R, R, R); mask: M in all six channels; rvdist: R in all six.
    """
    mask = encode_mask(labels > 0)
    rdm = encode_rdm(rdms)
    if task == "multi":
        return pack_target(mask, rdm).data
    if task == "mask":
        return pack_target(mask, mask).data
    if task == "rvdist":
        return pack_target(rdm, rdm).data
    raise ConfigError("train.task", f"unknown task {task!r}")


def smoothed(losses, window: int = 200) -> np.ndarray:
    """Trailing moving average (shorter windows at the start)."""
    x = np.asarray(losses, dtype=np.float64)
    c = np.cumsum(np.insert(x, 0, 0.0))
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def write_loss_csv(path, losses) -> None:
    lines = ["iteration,loss"] + [f"{i},{loss!r}" for i, loss in enumerate(losses)]
    atomic_write(path, ("\n".join(lines) + "\n").encode())


def train(config: RunConfig, dataset: Dataset, out_dir=None, params: DenoiserParams | None = None) -> TrainResult:
    """Run ``train.iters`` Adam steps; reproducible for a fixed ``train.seed``.

    Each step draws ``train.batch`` items and times t ~ U[1/n_steps, 1), samples
    X_t from the bridge posterior and regresses (X_t - X_0)/sigma_t.
    """
    if len(dataset) == 0:
        raise ShapeError("dataset is empty")
    if dataset.rdms is None:
        raise ShapeError("training needs precomputed reverse distance maps")
    schedule = schedule_from_config(config)
    rng = np.random.default_rng(config["train.seed"])
    if params is None:
        params = init_params(config["model.width"], config["model.depth"], rng, config["train.ema_decay"])
    x1_all = pack_input(encode_image(dataset.images)).data
    x0_all = build_targets(dataset.labels, dataset.rdms, config["train.task"])
    n_items, h, w, c = x0_all.shape
    batch = config["train.batch"]
    lr = config["train.lr"]
    t_min = float(schedule.t_grid[1])
    every = config["train.checkpoint_every"]
    out = Path(out_dir) if out_dir is not None else None
    meta = {"task": config["train.task"], "width": config["model.width"], "depth": config["model.depth"]}

    losses = []
    xt = np.empty((batch, h, w, c), dtype=np.float32)
    target = np.empty_like(xt)
    for it in range(config["train.iters"]):
        idx = rng.integers(0, n_items, size=batch)
        ts = rng.uniform(t_min, 1.0, size=batch)
        for j in range(batch):
            x0 = x0_all[idx[j]]
            state = sample_xt(x0, x1_all[idx[j]], float(ts[j]), schedule, rng)
            xt[j] = state.data
            target[j] = training_target(state, x0, schedule)
        losses.append(loss_and_grad(params, xt, ts, target))
        adam_step(params, lr)
        ema_update(params)
        if out is not None and (it + 1) % every == 0:
            save_checkpoint(out / "checkpoint.bseg", params, rng.bit_generator.state, meta)
            write_loss_csv(out / "loss.csv", losses)
            log.info("iteration %d: loss %.5f", it + 1, float(np.mean(losses[-every:])))
    if out is not None:
        save_checkpoint(out / "checkpoint.bseg", params, rng.bit_generator.state, meta)
        write_loss_csv(out / "loss.csv", losses)
    return TrainResult(params, losses, schedule)
