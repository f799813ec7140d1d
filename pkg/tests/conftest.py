"""
Shared test configuration.
It sets a deterministic environment and provides small flows, bases and synthetic specs used across packages.
These tests are executed by `pytest` locally and in CI and should remain deterministic.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest

ROOT_DIR = Path(__file__).resolve().parent.parent
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

from src.base.base_distribution import BaseDistribution  # noqa: E402
from src.common import settings as settings_module  # noqa: E402
from src.data.synthetic import SyntheticSpec  # noqa: E402
from src.flow.flow_model import FlowModel, build_flow  # noqa: E402
from src.numerics.rng import Rng  # noqa: E402
from src.numerics.tensor import Tensor4  # noqa: E402


@pytest.fixture(autouse=True)
def base_test_env(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    """Ensure settings resolve to test values and reports land in a temporary directory."""

    defaults = {
        "PROJECT_NAME": "test-project",
        "ENV": "test",
        "LOG_LEVEL": "INFO",
        "ALTFLOW_THREADS": "1",
        "ALTFLOW_REPORTS_DIR": str(tmp_path / "reports"),
    }

    for key, value in defaults.items():
        if os.getenv(key) is None or key == "ALTFLOW_REPORTS_DIR":
            monkeypatch.setenv(key, value)
    settings_module.get_settings.cache_clear()


@pytest.fixture
def rng() -> Rng:
    return Rng(1234)


@pytest.fixture
def tiny_flow() -> FlowModel:
    """Three random coupling layers over three channels; small enough for dense finite differences."""

    return build_flow(channels=3, depth=3, hidden_width=4, seed=7, init="random", output_scale=0.5)


@pytest.fixture
def tiny_batch(rng: Rng) -> Tensor4:
    return Tensor4(rng.normal((2, 3, 1, 2)))


@pytest.fixture
def random_base(rng: Rng) -> BaseDistribution:
    shape = (1, 3, 1, 2)
    return BaseDistribution(mu=Tensor4(0.3 * rng.normal(shape)), log_sigma=Tensor4(0.2 * rng.normal(shape)))


@pytest.fixture
def small_spec() -> SyntheticSpec:
    return SyntheticSpec(
        shape=(2, 4, 4),
        warp_depth=1,
        patch_size=2,
        n_train_normal=8,
        n_test_normal=4,
        n_test_anomalous=4,
        seed=3,
    )

