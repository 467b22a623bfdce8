"""Run configuration: JSON config file with command-line flag overrides."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

from .core import DEFAULT_CLASS_NAMES, ClassRegistry
from .errors import ConfigError

THREADS_ENV_VAR = "CONIC_BENCH_THREADS"


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR}={raw!r} is not an integer")


@dataclass(frozen=True)
class RunConfig:
    """Pinned defaults: central 224 crop, 200/400 micron radii, 100 bootstrap
    resamples, 2048 search points, 5 folds x 5 repeats."""

    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    crop_height: int = 224
    crop_width: int = 224
    radii_um: tuple[float, ...] = (200.0, 400.0)
    bootstrap_n: int = 100
    search_n: int = 2048
    folds: int = 5
    repeats: int = 5
    seed: int = 0
    threads: int = field(default_factory=_default_threads)
    n_perm: int = 5
    stratify: bool = False

    def __post_init__(self):
        if any(r <= 0 for r in self.radii_um):
            raise ConfigError("radii must be positive")
        if list(self.radii_um) != sorted(set(self.radii_um)):
            raise ConfigError("radii must be strictly increasing")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.repeats < 1 or self.bootstrap_n < 1 or self.search_n < 1:
            raise ConfigError("repeats, bootstrap_n and search_n must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.crop_height < 1 or self.crop_width < 1:
            raise ConfigError("crop dimensions must be positive")

    @property
    def registry(self) -> ClassRegistry:
        return ClassRegistry(names=self.class_names)

    def to_json(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "crop_height": self.crop_height,
            "crop_width": self.crop_width,
            "radii_um": list(self.radii_um),
            "bootstrap_n": self.bootstrap_n,
            "search_n": self.search_n,
            "folds": self.folds,
            "repeats": self.repeats,
            "seed": self.seed,
            "threads": self.threads,
            "n_perm": self.n_perm,
            "stratify": self.stratify,
        }

    @staticmethod
    def from_file(path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}")
        return RunConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict) -> "RunConfig":
        known = {
            "class_names": tuple,
            "crop_height": int,
            "crop_width": int,
            "radii_um": tuple,
            "bootstrap_n": int,
            "search_n": int,
            "folds": int,
            "repeats": int,
            "seed": int,
            "threads": int,
            "n_perm": int,
            "stratify": bool,
        }
        kwargs = {}
        for key, value in raw.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = known[key](value)
        return RunConfig(**kwargs)

    def override(self, **kwargs) -> "RunConfig":
        changed = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **changed) if changed else self
