"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment. Unknown keys are rejected.
Later sources override earlier ones (defaults < file < command-line flags).
"""
from __future__ import annotations

import math
from pathlib import Path

from .errors import ConfigError

__all__ = ["RunConfig", "DEFAULTS", "TASKS"]

TASKS = ("multi", "mask", "rvdist")

# key -> (type, default); None default means "must be supplied"
DEFAULTS: dict[str, tuple[type, object]] = {
    "schedule.n_steps": (int, 50),
    "schedule.beta_max": (float, 0.3),
    "schedule.beta_min": (float, 1e-4),
    "train.lr": (float, 5e-5),
    "train.iters": (int, 5000),
    "train.batch": (int, 8),
    "train.seed": (int, 0),
    "train.ema_decay": (float, 0.999),
    "train.task": (str, "multi"),
    "train.checkpoint_every": (int, 1000),
    "data.dir": (str, None),
    "model.width": (int, 32),
    "model.depth": (int, 3),
    "infer.dump_every": (int, 0),
    "infer.use_ema": (bool, True),
    "eval.radius": (float, 12.0),
    "eval.iou": (float, 0.5),
}

_POSITIVE_INT = {"schedule.n_steps", "train.iters", "train.batch", "model.width", "model.depth", "train.checkpoint_every"}
_UNIT_OPEN = {"train.ema_decay"}


def _parse(key: str, raw):
    kind = DEFAULTS[key][0]
    if not isinstance(raw, str):
        value = raw
    elif kind is bool:
        low = raw.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(key, f"expected a boolean, got {raw!r}")
        value = low in ("true", "1", "yes")
    else:
        try:
            value = kind(raw.strip())
        except ValueError:
            raise ConfigError(key, f"expected {kind.__name__}, got {raw!r}") from None
    if kind is float:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(key, f"must be finite, got {value!r}")
    return value


class RunConfig:
    def __init__(self, values: dict | None = None):
        self._values = {k: default for k, (_, default) in DEFAULTS.items()}
        if values:
            self.update(values)

    def update(self, values: dict) -> "RunConfig":
        for key, raw in values.items():
            if key not in DEFAULTS:
                raise ConfigError(key, "unknown configuration key")
            self._values[key] = _parse(key, raw)
        self.validate()
        return self

    def validate(self) -> None:
        for key in _POSITIVE_INT:
            if self._values[key] < 1:
                raise ConfigError(key, f"must be >= 1, got {self._values[key]}")
        if self["infer.dump_every"] < 0:
            raise ConfigError("infer.dump_every", "must be >= 0")
        for key in _UNIT_OPEN:
            if not 0.0 <= self._values[key] <= 1.0:
                raise ConfigError(key, f"must lie in [0, 1], got {self._values[key]}")
        if self["train.lr"] <= 0:
            raise ConfigError("train.lr", "must be positive")
        if self["eval.radius"] < 0:
            raise ConfigError("eval.radius", "must be non-negative")
        if not 0.0 <= self["eval.iou"] < 1.0:
            raise ConfigError("eval.iou", "must lie in [0, 1)")
        if self["train.task"] not in TASKS:
            raise ConfigError("train.task", f"must be one of {', '.join(TASKS)}")

    def require(self, *keys: str) -> None:
        for key in keys:
            if self._values.get(key) is None:
                raise ConfigError(key, "required but not set")

    def __getitem__(self, key: str):
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown configuration key")
        return self._values[key]

    def as_dict(self) -> dict:
        return dict(self._values)

    @staticmethod
    def parse_text(text: str) -> dict:
        out = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
        return out

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        cfg = cls(cls.parse_text(Path(path).read_text()))
        if overrides:
            cfg.update(overrides)
        return cfg

    def dumps(self) -> str:
        lines = []
        for key in DEFAULTS:
            value = self._values[key]
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"
