"""
Tests for training configuration validation and loading.
It asserts expected behavior and guards against regressions in the corresponding component.
These tests are executed by `pytest` locally and in CI and should remain deterministic.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from src.common.errors import ConfigError
from src.training.training_config import TrainConfig, load_yaml, train_config_from_mapping


def test_defaults_follow_the_alternating_schedule() -> None:
    config = TrainConfig()

    assert config.eta2_max == 0.05
    assert config.freezing_interval == 5
    assert config.clip_norm == 100.0
    assert config.warmup_epochs == 0
    assert config.variant == "altub"
    assert config.psi_trainable


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"eta1": 0.0}, "eta1"),
        ({"eta2_max": 0.0}, "eta2_max"),
        ({"eta2_max": 1.5}, "eta2_max"),
        ({"freezing_interval": 0}, "freezing_interval"),
        ({"clip_norm": -1.0}, "clip_norm"),
        ({"stereotype_mode": True}, "mutually exclusive"),
        ({"lr_schedule": "linear"}, "lr_schedule"),
    ],
)
def test_invalid_values_raise_config_error(changes: dict, message: str) -> None:
    with pytest.raises(ConfigError, match=message):
        TrainConfig(**changes)


def test_variants() -> None:
    assert TrainConfig(altub_enabled=False).variant == "baseline"
    assert not TrainConfig(altub_enabled=False).psi_trainable
    stereotype = TrainConfig(altub_enabled=False, stereotype_mode=True)
    assert stereotype.variant == "stereotype"
    assert stereotype.psi_trainable


def test_mapping_rejects_unknown_keys_and_coerces_numbers() -> None:
    with pytest.raises(ConfigError, match="unknown training keys"):
        train_config_from_mapping({"learning_rate": 0.1})

    config = train_config_from_mapping({"eta1": "0.01", "epochs": 3.0})
    assert config.eta1 == 0.01
    assert config.epochs == 3


def test_booleans_must_be_real_booleans() -> None:
    with pytest.raises(ConfigError, match="altub_enabled"):
        train_config_from_mapping({"altub_enabled": "yes"})


def test_to_dict_round_trip() -> None:
    config = TrainConfig(eta1=0.002, lr_schedule="cosine", warmup_epochs=3)
    assert train_config_from_mapping(config.to_dict()) == config
    assert config.replace(seed=3).seed == 3


def test_load_yaml_errors(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="not found"):
        load_yaml(tmp_path / "missing.yaml")

    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="mapping"):
        load_yaml(listing)

    broken = tmp_path / "broken.yaml"
    broken.write_text("training: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_yaml(broken)
