"""
Tests for the data-space versus latent-space divergence check.
It asserts expected behavior and guards against regressions in the corresponding component.
These tests are executed by `pytest` locally and in CI and should remain deterministic.
"""

from __future__ import annotations

import numpy as np
import pytest

from src.base.base_distribution import BaseDistribution
from src.common.errors import RequiresKnownDensityError
from src.diagnostics.normalization_checks import MIN_KL_SAMPLES, GaussianSampler, kl_identity_check
from src.flow.flow_model import FlowModel, build_flow
from src.numerics.rng import Rng
from src.numerics.tensor import Tensor4


def test_data_and_latent_estimates_agree(tiny_flow: FlowModel, random_base: BaseDistribution) -> None:
    sampler = GaussianSampler(mean=0.5, std=1.3, event_shape=(3, 1, 2))

    result = kl_identity_check(tiny_flow, random_base, sampler, MIN_KL_SAMPLES, rng=Rng(21))

    assert result.kl_x == pytest.approx(result.kl_z, abs=1e-10)
    assert result.kl_x > 0.0
    assert result.n == MIN_KL_SAMPLES
    assert set(result.to_dict()) == {"kl_x", "kl_z", "stderr_x", "stderr_z", "n"}


def test_shifted_gaussian_has_closed_form_divergence() -> None:
    sampler = GaussianSampler(mean=2.0, std=1.0)

    result = kl_identity_check(build_flow(channels=1, depth=0), BaseDistribution.standard(1, 1, 1), sampler, 100_000)

    assert result.kl_x == pytest.approx(2.0, abs=0.03)
    assert result.stderr_x == pytest.approx(2.0 / np.sqrt(100_000), rel=0.05)


def test_identical_distributions_have_zero_divergence() -> None:
    sampler = GaussianSampler(event_shape=(2, 1, 1))

    result = kl_identity_check(build_flow(channels=2, depth=0), BaseDistribution.standard(2, 1, 1), sampler, MIN_KL_SAMPLES)

    assert result.kl_x == pytest.approx(0.0, abs=1e-12)
    assert result.kl_z == pytest.approx(0.0, abs=1e-12)


def test_sampler_without_density_is_rejected(tiny_flow: FlowModel, random_base: BaseDistribution) -> None:
    class SampleOnly:
        def sample(self, rng: Rng, n: int) -> Tensor4:
            return Tensor4(rng.normal((n, 3, 1, 2)))

    with pytest.raises(RequiresKnownDensityError):
        kl_identity_check(tiny_flow, random_base, SampleOnly(), MIN_KL_SAMPLES)


def test_too_few_samples_is_rejected(tiny_flow: FlowModel, random_base: BaseDistribution) -> None:
    with pytest.raises(ValueError):
        kl_identity_check(tiny_flow, random_base, GaussianSampler(event_shape=(3, 1, 2)), MIN_KL_SAMPLES - 1)
