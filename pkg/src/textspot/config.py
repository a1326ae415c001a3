"""Run configuration: one JSON file with model/train/eval/paths sections.

Unknown sections or keys are rejected outright so typos never silently
fall back to defaults. configs/default.json in the repository root
documents every default; a test keeps it in sync with this module.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .metrics import EvalConfig
from .model import ModelConfig


class ConfigError(ValueError):
    """Malformed run configuration."""


@dataclass
class TrainConfig:
    batch_size: int = 1
    steps_per_cycle: int | None = None   # None = every admitted sample once
    bucket_count: int = 4                # curriculum B
    cycle_count: int = 12                # curriculum C
    base_lr: float = 3e-4
    gamma: float = 0.9                   # per-cycle lr decay
    lam: float = 1.0                     # confidence-loss weight
    aug_noise: float = 0.0               # per-presentation pixel noise level
    aug_shift: int = 0                   # per-presentation max |shift| in px
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.steps_per_cycle is not None and self.steps_per_cycle < 1:
            raise ConfigError("steps_per_cycle must be >= 1 or null")
        if not 0.0 <= self.aug_noise <= 1.0:
            raise ConfigError("aug_noise must be in [0, 1]")
        if not 0 <= self.aug_shift <= 16:
            raise ConfigError("aug_shift must be in [0, 16]")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1]")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")


@dataclass
class PathsConfig:
    data: str | None = None
    model: str | None = None
    loss_csv: str | None = None
    schedule: str | None = None


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


_SECTIONS = {"model": ModelConfig, "train": TrainConfig,
             "eval": EvalConfig, "paths": PathsConfig}


def _build_section(cls, obj, section: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"section {section!r} must be an object")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(obj.keys() - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in section {section!r}")
    try:
        return cls(**obj)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"section {section!r}: {e}") from None


def run_config_from_obj(obj) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = sorted(obj.keys() - _SECTIONS.keys())
    if unknown:
        raise ConfigError(f"unknown section {unknown[0]!r} "
                          f"(expected {sorted(_SECTIONS)})")
    return RunConfig(**{name: _build_section(cls, obj.get(name, {}), name)
                        for name, cls in _SECTIONS.items()})


def load_run_config(path: Path | str) -> RunConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON: {e}") from None
    return run_config_from_obj(obj)


def dump_run_config(config: RunConfig, path: Path | str) -> None:
    Path(path).write_text(
        json.dumps(asdict(config), sort_keys=True, indent=2) + "\n")
