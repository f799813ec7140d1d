"""
Finite-difference checks for the hand-derived flow gradients.
It asserts expected behavior and guards against regressions in the corresponding component.
These tests are executed by `pytest` locally and in CI and should remain deterministic.
"""

from __future__ import annotations

import numpy as np
import pytest

from src.base.base_distribution import BaseDistribution
from src.common.errors import ShapeMismatchError
from src.flow.flow_model import FlowModel, backward, build_flow, forward
from src.numerics.rng import Rng
from src.numerics.tensor import Tensor4
from src.training.trainer import loss_and_grads
from tests.support import central_differences, relative_error


def _linear_probe(model: FlowModel, x: Tensor4, weights_z: np.ndarray, weights_ld: np.ndarray) -> float:
    z, log_det = forward(model, x)
    return float(np.sum(weights_z * z.data) + np.sum(weights_ld * log_det))


def test_parameter_gradients_match_finite_differences(tiny_flow: FlowModel, tiny_batch: Tensor4) -> None:
    rng = Rng(10)
    weights_z = rng.normal(tiny_batch.shape)
    weights_ld = rng.normal(tiny_batch.batch)

    grad_theta, _ = backward(tiny_flow, tiny_batch, Tensor4(weights_z), weights_ld)
    numeric = central_differences(
        lambda theta: _linear_probe(tiny_flow.with_parameter_vector(theta), tiny_batch, weights_z, weights_ld),
        tiny_flow.parameter_vector(),
    )

    assert relative_error(grad_theta, numeric) < 1e-4


def test_input_gradients_match_finite_differences(tiny_flow: FlowModel, tiny_batch: Tensor4) -> None:
    rng = Rng(11)
    weights_z = rng.normal(tiny_batch.shape)
    weights_ld = rng.normal(tiny_batch.batch)

    _, grad_x = backward(tiny_flow, tiny_batch, Tensor4(weights_z), weights_ld)
    numeric = central_differences(
        lambda flat: _linear_probe(tiny_flow, Tensor4(flat.reshape(tiny_batch.shape)), weights_z, weights_ld),
        tiny_batch.data.ravel(),
    )

    assert relative_error(grad_x.data.ravel(), numeric) < 1e-4


def test_nll_gradient_of_every_parameter(tiny_flow: FlowModel, tiny_batch: Tensor4, random_base: BaseDistribution) -> None:
    result = loss_and_grads(tiny_flow, random_base, tiny_batch)

    numeric = central_differences(
        lambda theta: loss_and_grads(tiny_flow.with_parameter_vector(theta), random_base, tiny_batch).loss,
        tiny_flow.parameter_vector(),
    )

    assert relative_error(result.grad_theta, numeric) < 1e-4


def test_odd_channel_count_gradients() -> None:
    model = build_flow(channels=1, depth=2, hidden_width=3, seed=4, init="random", output_scale=0.7)
    x = Tensor4(Rng(12).normal((3, 1, 2, 1)))
    base = BaseDistribution.standard(1, 2, 1)

    result = loss_and_grads(model, base, x)
    numeric = central_differences(
        lambda theta: loss_and_grads(model.with_parameter_vector(theta), base, x).loss,
        model.parameter_vector(),
    )

    assert relative_error(result.grad_theta, numeric) < 1e-4


def test_backward_validates_upstream_shapes(tiny_flow: FlowModel, tiny_batch: Tensor4) -> None:
    with pytest.raises(ShapeMismatchError, match="grad_z"):
        backward(tiny_flow, tiny_batch, Tensor4.zeros((1, 3, 1, 2)), np.zeros(2))
    with pytest.raises(ShapeMismatchError, match="grad_log_det"):
        backward(tiny_flow, tiny_batch, Tensor4.zeros(tiny_batch.shape), np.zeros(3))
