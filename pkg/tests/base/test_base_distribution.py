"""
Tests for the learnable diagonal Gaussian base distribution.
It asserts expected behavior and guards against regressions in the corresponding component.
These tests are executed by `pytest` locally and in CI and should remain deterministic.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import norm

from src.base.base_distribution import (
    BaseDistribution,
    grad_psi,
    grad_z,
    log_prob,
    standardize,
    unstandardize,
)
from src.common.errors import ShapeMismatchError
from src.numerics.rng import Rng
from src.numerics.tensor import Tensor4
from tests.support import central_differences, relative_error


def _base_from_vector(template: BaseDistribution, vector: np.ndarray) -> BaseDistribution:
    return template.with_parameter_vector(vector)


def test_standard_base_is_exactly_zero() -> None:
    base = BaseDistribution.standard(2, 3, 3)

    assert base.is_standard()
    assert base.dims == 18
    assert np.array_equal(base.parameter_vector(), np.zeros(36))


def test_log_prob_matches_scipy() -> None:
    rng = Rng(0)
    shape = (1, 2, 2, 1)
    base = BaseDistribution(mu=Tensor4(rng.normal(shape)), log_sigma=Tensor4(0.3 * rng.normal(shape)))
    z = Tensor4(rng.normal((5, 2, 2, 1)))

    expected = norm.logpdf(z.data, loc=base.mu.data, scale=base.sigma).reshape(5, -1).sum(axis=1)

    assert np.allclose(log_prob(base, z), expected, rtol=1e-12, atol=1e-12)


def test_standard_log_prob_at_zero() -> None:
    base = BaseDistribution.standard(3, 1, 1)
    value = log_prob(base, Tensor4.zeros((1, 3, 1, 1)))[0]
    assert value == pytest.approx(-1.5 * math.log(2.0 * math.pi))


def test_single_dimension_closed_form_gradient() -> None:
    base = BaseDistribution.standard(1, 1, 1)
    grad_mu, grad_log_sigma = grad_psi(base, Tensor4.full((1, 1, 1, 1), 1.5))

    assert grad_mu.data.item() == -1.5
    assert grad_log_sigma.data.item() == -1.25


def test_psi_gradient_matches_finite_differences_on_random_instances() -> None:
    for seed in range(100):
        rng = Rng(seed)
        shape = (1, 2, 1, 2)
        base = BaseDistribution(mu=Tensor4(rng.normal(shape)), log_sigma=Tensor4(0.5 * rng.normal(shape)))
        z = Tensor4(rng.normal((3, 2, 1, 2)))

        grad_mu, grad_log_sigma = grad_psi(base, z)
        analytic = np.concatenate([grad_mu.data.ravel(), grad_log_sigma.data.ravel()])
        numeric = central_differences(
            lambda vector: float(-np.mean(log_prob(_base_from_vector(base, vector), z))),
            base.parameter_vector(),
            eps=1e-5,
        )

        assert relative_error(analytic, numeric) < 1e-6


def test_grad_z_is_scaled_residual() -> None:
    shape = (1, 1, 1, 2)
    base = BaseDistribution(mu=Tensor4.full(shape, 1.0), log_sigma=Tensor4.full(shape, math.log(2.0)))
    z = Tensor4(np.array([[[[3.0, -1.0]]]]))

    assert np.allclose(grad_z(base, z).data, np.array([[[[0.5, -0.5]]]]))


def test_standardize_round_trip() -> None:
    rng = Rng(3)
    shape = (1, 2, 2, 2)
    base = BaseDistribution(mu=Tensor4(rng.normal(shape)), log_sigma=Tensor4(0.4 * rng.normal(shape)))
    z = Tensor4(rng.normal((4, 2, 2, 2)))

    assert np.allclose(unstandardize(base, standardize(base, z)).data, z.data, atol=1e-12)


def test_event_shape_mismatch_is_rejected() -> None:
    base = BaseDistribution.standard(2, 2, 2)
    with pytest.raises(ShapeMismatchError):
        log_prob(base, Tensor4.zeros((1, 2, 2, 3)))
    with pytest.raises(ShapeMismatchError):
        BaseDistribution(mu=Tensor4.zeros((1, 2, 1, 1)), log_sigma=Tensor4.zeros((1, 3, 1, 1)))


def test_shifted_moves_only_the_mean() -> None:
    base = BaseDistribution.standard(1, 1, 2)
    moved = base.shifted(Tensor4.full((1, 1, 1, 2), 0.5))

    assert np.array_equal(moved.mu.data, np.full((1, 1, 1, 2), 0.5))
    assert moved.log_sigma.equals(base.log_sigma)
