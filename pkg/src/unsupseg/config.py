"""Run configuration: JSON file + CLI overrides, defaults from the method's
published operating points (20/80 clusters, 30 neighbors, lr 6e-5, 2 rounds).

Precedence is flags > file > defaults. Relative paths inside a config file
resolve against the file's directory, so run directories stay relocatable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .graph import DEFAULT_K_NEIGHBORS
from .discovery import DEFAULT_FILTER_FRACTION
from .proposals import DEFAULT_CROP_TARGET, DEFAULT_MIN_AREA_FRACTION, DEFAULT_THETA
from .selftrain import DEFAULT_LEARNING_RATE, TrainConfig

_PATH_FIELDS = ("train_manifest", "extend_manifest", "eval_manifest",
                "class_map", "external_contract", "output_dir")


@dataclass
class RunConfig:
    train_manifest: Optional[str] = None
    extend_manifest: Optional[str] = None
    eval_manifest: Optional[str] = None
    output_dir: str = "runs/run0"

    theta: float = DEFAULT_THETA
    min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION
    crop_target: int = DEFAULT_CROP_TARGET

    k_neighbors: int = DEFAULT_K_NEIGHBORS
    n_clusters: int = 20
    n_components: Optional[int] = None  # None: same as n_clusters
    n_init: int = 10
    filter_fraction: float = DEFAULT_FILTER_FRACTION

    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_pixels: Optional[int] = None
    epochs: tuple[int, ...] = (10, 5)  # per self-training iteration; last repeats
    optimizer: str = "adam"
    crop_scale: Optional[tuple[float, float]] = (0.5, 1.0)
    iterations: int = 2
    external_contract: Optional[str] = None

    eval_mode: str = "hungarian"
    include_background: bool = True
    class_map: Optional[str] = None

    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must be in [0, 1], got {self.theta}")
        if not 0.0 <= self.min_area_fraction <= 1.0:
            raise ConfigError(f"min_area_fraction out of [0, 1]: {self.min_area_fraction}")
        if self.crop_target < 1:
            raise ConfigError(f"crop_target must be >= 1, got {self.crop_target}")
        if self.k_neighbors < 1:
            raise ConfigError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.n_clusters < 1:
            raise ConfigError(f"n_clusters must be >= 1, got {self.n_clusters}")
        if self.n_components is not None and self.n_components < 1:
            raise ConfigError(f"n_components must be >= 1, got {self.n_components}")
        if self.n_init < 1:
            raise ConfigError(f"n_init must be >= 1, got {self.n_init}")
        if not 0.0 <= self.filter_fraction < 1.0:
            raise ConfigError(f"filter_fraction must be in [0, 1), got {self.filter_fraction}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_pixels is not None and self.batch_pixels < 1:
            raise ConfigError(f"batch_pixels must be >= 1, got {self.batch_pixels}")
        if not self.epochs or any(e < 1 for e in self.epochs):
            raise ConfigError(f"epochs must all be >= 1, got {self.epochs}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.eval_mode not in ("hungarian", "majority"):
            raise ConfigError(f"eval_mode must be hungarian or majority, got {self.eval_mode!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def spectral_components(self) -> int:
        return self.n_components if self.n_components is not None else self.n_clusters

    def epochs_for_iteration(self, iteration: int) -> int:
        idx = min(iteration - 1, len(self.epochs) - 1)
        return self.epochs[idx]

    def train_config(self, iteration: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_pixels=self.batch_pixels,
            epochs=self.epochs_for_iteration(iteration),
            seed=self.seed + iteration - 1,
            optimizer=self.optimizer,
            crop_scale=self.crop_scale,
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _coerce(name: str, value):
    if value is None:
        return None
    if name == "epochs":
        seq = value if isinstance(value, (list, tuple)) else [value]
        return tuple(int(v) for v in seq)
    if name == "crop_scale":
        if isinstance(value, (list, tuple)):
            return (float(value[0]), float(value[1]))
        raise ConfigError(f"crop_scale must be [lo, hi], got {value!r}")
    return value


def load_config(path) -> RunConfig:
    """Read a JSON config file, resolving its relative paths."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    base = path.parent
    cleaned = {}
    for name, value in raw.items():
        value = _coerce(name, value)
        if name in _PATH_FIELDS and value is not None and not Path(value).is_absolute():
            value = str((base / value).resolve())
        cleaned[name] = value
    cfg = RunConfig(**cleaned)
    cfg.validate()
    return cfg


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Non-None override values win over file values."""
    cleaned = {k: _coerce(k, v) for k, v in overrides.items() if v is not None}
    out = replace(cfg, **cleaned)
    out.validate()
    return out
