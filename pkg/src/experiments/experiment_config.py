"""
Experiment configuration: dataset source, flow architecture, training, evaluation, diagnostics and comparison settings.
It loads `configs/experiment.yaml`-style files, validates every section, and applies command-line overrides.
The `to_dict()` echo written into every report rebuilds an identical config.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from src.common.errors import AltflowError, ConfigError
from src.common.settings import get_settings
from src.data.synthetic import SyntheticSpec, synthetic_spec_from_mapping
from src.training.training_config import TrainConfig, load_yaml, train_config_from_mapping

DEFAULT_CONFIG_PATH = Path("configs/experiment.yaml")
VALID_INITS = {"zeros", "standard", "random"}
VALID_VARIANTS = ("baseline", "altub", "stereotype")
SECTIONS = {"dataset", "flow", "training", "evaluation", "diagnostics", "compare", "output_dir", "seeds"}


@dataclass(frozen=True)
class DatasetConfig:
    features_path: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)

    def to_dict(self) -> dict[str, Any]:
        return {"features_path": self.features_path, "synthetic": self.synthetic.to_dict()}


@dataclass(frozen=True)
class FlowConfig:
    depth: int = 2
    hidden_width: int | None = None
    init: str = "standard"

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ConfigError("flow.depth must be >= 0", details={"depth": self.depth})
        if self.hidden_width is not None and self.hidden_width < 1:
            raise ConfigError("flow.hidden_width must be >= 1", details={"hidden_width": self.hidden_width})
        if self.init not in VALID_INITS:
            raise ConfigError(f"flow.init must be one of {sorted(VALID_INITS)}", details={"init": self.init})

    def to_dict(self) -> dict[str, Any]:
        return {"depth": self.depth, "hidden_width": self.hidden_width, "init": self.init}


@dataclass(frozen=True)
class EvaluationConfig:
    every_epochs: int = 1
    window_start: int | None = None
    window_end: int | None = None

    def __post_init__(self) -> None:
        if self.every_epochs < 1:
            raise ConfigError("evaluation.every_epochs must be >= 1")
        if self.window_start is not None and self.window_end is not None and self.window_start > self.window_end:
            raise ConfigError("evaluation.window_start must not exceed window_end")

    def to_dict(self) -> dict[str, Any]:
        return {"every_epochs": self.every_epochs, "window_start": self.window_start, "window_end": self.window_end}


@dataclass(frozen=True)
class DiagnosticsConfig:
    every_epochs: int = 10

    def __post_init__(self) -> None:
        if self.every_epochs < 1:
            raise ConfigError("diagnostics.every_epochs must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {"every_epochs": self.every_epochs}


@dataclass(frozen=True)
class CompareConfig:
    variants: tuple[str, ...] = ("baseline", "altub")

    def __post_init__(self) -> None:
        unknown = sorted(set(self.variants).difference(VALID_VARIANTS))
        if unknown or not self.variants:
            raise ConfigError(f"compare.variants must be a non-empty subset of {list(VALID_VARIANTS)}", details={"unknown": unknown})

    def to_dict(self) -> dict[str, Any]:
        return {"variants": list(self.variants)}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    output_dir: str | None = None
    seeds: tuple[int, ...] = (25,)

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")

    def window(self) -> tuple[int, int]:
        epochs = self.training.epochs
        start = self.evaluation.window_start if self.evaluation.window_start is not None else epochs // 2
        end = self.evaluation.window_end if self.evaluation.window_end is not None else epochs - 1
        return start, end

    def resolved_output_dir(self, command: str) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        return Path(get_settings().ALTFLOW_REPORTS_DIR) / "experiments" / command

    def with_training(self, **changes: Any) -> ExperimentConfig:
        return replace(self, training=self.training.replace(**changes))

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset.to_dict(),
            "flow": self.flow.to_dict(),
            "training": self.training.to_dict(),
            "evaluation": self.evaluation.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
            "compare": self.compare.to_dict(),
            "output_dir": self.output_dir,
            "seeds": list(self.seeds),
        }


def _section(mapping: dict[str, Any], name: str) -> dict[str, Any]:
    value = mapping.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section '{name}' must be a mapping", details={"section": name})
    return dict(value)


def _build(cls: type, name: str, values: dict[str, Any]) -> Any:
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"invalid keys in section '{name}': {exc}", details={"section": name}) from exc


def experiment_config_from_mapping(mapping: dict[str, Any] | None) -> ExperimentConfig:
    raw = dict(mapping or {})
    unknown = sorted(set(raw).difference(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}", details={"unknown": unknown})

    dataset_raw = _section(raw, "dataset")
    extra = sorted(set(dataset_raw).difference({"features_path", "synthetic"}))
    if extra:
        raise ConfigError(f"unknown dataset keys: {extra}", details={"unknown": extra})
    try:
        synthetic = synthetic_spec_from_mapping(dataset_raw.get("synthetic"))
    except AltflowError as exc:
        raise ConfigError(f"dataset.synthetic: {exc}", details=exc.details) from exc
    features_path = dataset_raw.get("features_path")
    dataset = DatasetConfig(features_path=str(features_path) if features_path else None, synthetic=synthetic)

    compare_raw = _section(raw, "compare")
    if "variants" in compare_raw:
        compare_raw["variants"] = tuple(compare_raw["variants"])

    seeds_raw = raw.get("seeds", (25,))
    if isinstance(seeds_raw, int) or not all(isinstance(seed, int) and seed >= 0 for seed in seeds_raw):
        raise ConfigError("seeds must be a list of non-negative integers", details={"seeds": seeds_raw})

    return ExperimentConfig(
        dataset=dataset,
        flow=_build(FlowConfig, "flow", _section(raw, "flow")),
        training=train_config_from_mapping(_section(raw, "training")),
        evaluation=_build(EvaluationConfig, "evaluation", _section(raw, "evaluation")),
        diagnostics=_build(DiagnosticsConfig, "diagnostics", _section(raw, "diagnostics")),
        compare=_build(CompareConfig, "compare", compare_raw),
        output_dir=str(raw["output_dir"]) if raw.get("output_dir") else None,
        seeds=tuple(int(seed) for seed in seeds_raw),
    )


def load_experiment_config(path: Path | None = None) -> ExperimentConfig:
    """Read a YAML config; with no path, the shipped default is used when present, else built-in defaults."""

    if path is None:
        if not DEFAULT_CONFIG_PATH.exists():
            return ExperimentConfig()
        path = DEFAULT_CONFIG_PATH
    return experiment_config_from_mapping(load_yaml(Path(path)))


def apply_overrides(
    config: ExperimentConfig,
    *,
    seed: int | None = None,
    no_altub: bool = False,
    stereotype: bool = False,
    freezing_interval: int | None = None,
    eta2_max: float | None = None,
    depth: int | None = None,
    out: str | None = None,
    dataset: str | None = None,
    seeds: list[int] | None = None,
) -> ExperimentConfig:
    """Flags take precedence over file values."""

    training: dict[str, Any] = {}
    if seed is not None:
        training["seed"] = seed
    if no_altub or stereotype:
        training["altub_enabled"] = False
    if stereotype:
        training["stereotype_mode"] = True
    if freezing_interval is not None:
        training["freezing_interval"] = freezing_interval
    if eta2_max is not None:
        training["eta2_max"] = eta2_max

    updated = config.with_training(**training) if training else config
    if depth is not None:
        updated = replace(updated, flow=replace(updated.flow, depth=depth))
    if out is not None:
        updated = replace(updated, output_dir=out)
    if dataset is not None:
        updated = replace(updated, dataset=replace(updated.dataset, features_path=dataset))
    if seeds:
        updated = replace(updated, seeds=tuple(seeds))
    elif seed is not None:
        updated = replace(updated, seeds=(seed,))
    return updated
