"""
Configuration for maximum-likelihood flow training with alternating base updates.
It validates the optimisation hyperparameters and the alternating schedule before any epoch runs.
Values come from the `training` section of the experiment YAML; flags may override them.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

import yaml

from src.common.errors import ConfigError

VALID_LR_SCHEDULES = {"constant", "cosine", "step"}


def load_yaml(path: Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", details={"path": str(path)})
    with path.open("r", encoding="utf-8") as handle:
        try:
            loaded = yaml.safe_load(handle) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config at {path} is not valid YAML: {exc}", details={"path": str(path)}) from exc
    if not isinstance(loaded, dict):
        raise ConfigError(f"Config at {path} must be a mapping, got: {type(loaded).__name__}")
    return dict(loaded)


@dataclass(frozen=True)
class TrainConfig:
    eta1: float = 1e-3
    eta2_max: float = 0.05
    freezing_interval: int = 5
    epochs: int = 200
    batch_size: int = 16
    clip_norm: float = 100.0
    warmup_epochs: int = 0
    altub_enabled: bool = True
    stereotype_mode: bool = False
    freeze_flow: bool = False
    seed: int = 25
    lr_schedule: str = "constant"
    lr_decay_gamma: float = 0.5
    lr_decay_step: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if self.eta1 <= 0:
            raise ConfigError("eta1 must be > 0", details={"eta1": self.eta1})
        if not 0 < self.eta2_max <= 1:
            raise ConfigError("eta2_max must be in (0, 1]", details={"eta2_max": self.eta2_max})
        if self.freezing_interval < 1:
            raise ConfigError("freezing_interval must be >= 1", details={"freezing_interval": self.freezing_interval})
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be > 0", details={"clip_norm": self.clip_norm})
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1", details={"epochs": self.epochs})
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", details={"batch_size": self.batch_size})
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0", details={"warmup_epochs": self.warmup_epochs})
        if self.altub_enabled and self.stereotype_mode:
            raise ConfigError("altub_enabled and stereotype_mode are mutually exclusive")
        if self.lr_schedule not in VALID_LR_SCHEDULES:
            raise ConfigError(
                f"lr_schedule must be one of {sorted(VALID_LR_SCHEDULES)}, got {self.lr_schedule!r}",
            )
        if not 0 < self.lr_decay_gamma <= 1 or self.lr_decay_step < 1:
            raise ConfigError("lr_decay_gamma must be in (0, 1] and lr_decay_step >= 1")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("Adam betas must be in [0, 1) and adam_eps > 0")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", details={"seed": self.seed})

    @property
    def psi_trainable(self) -> bool:
        return self.altub_enabled or self.stereotype_mode

    @property
    def variant(self) -> str:
        if self.altub_enabled:
            return "altub"
        if self.stereotype_mode:
            return "stereotype"
        return "baseline"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def replace(self, **changes: Any) -> TrainConfig:
        return train_config_from_mapping({**self.to_dict(), **changes})


def train_config_from_mapping(mapping: dict[str, Any] | None) -> TrainConfig:
    values = dict(mapping or {})
    known = {field.name for field in fields(TrainConfig)}
    unknown = sorted(set(values).difference(known))
    if unknown:
        raise ConfigError(f"unknown training keys: {unknown}", details={"unknown": unknown})

    defaults = TrainConfig.__dataclass_fields__
    coerced: dict[str, Any] = {}
    for key, raw in values.items():
        default = defaults[key].default
        try:
            if isinstance(default, bool):
                if not isinstance(raw, bool):
                    raise TypeError(f"expected a boolean, got {raw!r}")
                coerced[key] = raw
            elif isinstance(default, int):
                coerced[key] = int(raw)
            elif isinstance(default, float):
                coerced[key] = float(raw)
            else:
                coerced[key] = str(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for training.{key}: {exc}", details={"key": key}) from exc
    return TrainConfig(**coerced)
