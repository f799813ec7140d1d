"""
Learnable diagonal Gaussian base distribution N(mu, diag(sigma^2)) over every (c, h, w) dimension.
The spread is stored as log_sigma = ln(sigma) so it may go negative; gradients are taken with respect
to (mu, log_sigma) and averaged over the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from src.common.errors import ShapeMismatchError
from src.numerics.tensor import Tensor4, assert_finite

HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class BaseDistribution:
    mu: Tensor4
    log_sigma: Tensor4

    def __post_init__(self) -> None:
        if self.mu.shape != self.log_sigma.shape or self.mu.batch != 1:
            raise ShapeMismatchError(
                "mu and log_sigma must share a (1, C, H, W) shape",
                details={"mu": list(self.mu.shape), "log_sigma": list(self.log_sigma.shape)},
            )

    @classmethod
    def standard(cls, channels: int, height: int, width: int) -> BaseDistribution:
        """N(0, I): mu = 0 and log_sigma = 0 exactly."""
        shape = (1, channels, height, width)
        return cls(mu=Tensor4.zeros(shape), log_sigma=Tensor4.zeros(shape))

    @property
    def event_shape(self) -> tuple[int, int, int]:
        _, c, h, w = self.mu.shape
        return c, h, w

    @property
    def dims(self) -> int:
        c, h, w = self.event_shape
        return c * h * w

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma.data)

    def is_standard(self) -> bool:
        return not np.any(self.mu.data) and not np.any(self.log_sigma.data)

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([self.mu.data.ravel(), self.log_sigma.data.ravel()])

    def with_parameter_vector(self, vector: np.ndarray) -> BaseDistribution:
        flat = np.asarray(vector, dtype=np.float64)
        if flat.shape != (2 * self.dims,):
            raise ShapeMismatchError(
                f"base parameter vector has shape {flat.shape}, expected ({2 * self.dims},)",
                details={"expected": 2 * self.dims},
            )
        shape = self.mu.shape
        return BaseDistribution(
            mu=Tensor4(flat[: self.dims].reshape(shape)),
            log_sigma=Tensor4(flat[self.dims :].reshape(shape)),
        )

    def shifted(self, delta: Tensor4) -> BaseDistribution:
        return BaseDistribution(mu=Tensor4(self.mu.data + delta.data), log_sigma=self.log_sigma)


def _check_event_shape(base: BaseDistribution, z: Tensor4) -> None:
    if z.shape[1:] != base.event_shape:
        raise ShapeMismatchError(
            f"z event shape {z.shape[1:]} does not match base {base.event_shape}",
            details={"z": list(z.shape), "base": list(base.event_shape)},
        )


def log_prob(base: BaseDistribution, z: Tensor4) -> np.ndarray:
    """Per-sample log-density, summed over all (c, h, w) dimensions."""

    _check_event_shape(base, z)
    log_sigma = base.log_sigma.data
    residual = z.data - base.mu.data
    terms = -HALF_LOG_TWO_PI - log_sigma - np.square(residual) / (2.0 * np.exp(2.0 * log_sigma))
    return assert_finite(terms.reshape(z.batch, -1).sum(axis=1), op="base.log_prob")


def grad_psi(base: BaseDistribution, z: Tensor4) -> tuple[Tensor4, Tensor4]:
    """Batch-mean gradients of -log_prob with respect to (mu, log_sigma)."""

    _check_event_shape(base, z)
    variance = np.exp(2.0 * base.log_sigma.data)
    residual = z.data - base.mu.data
    grad_mu = np.mean(-residual / variance, axis=0, keepdims=True)
    grad_log_sigma = np.mean(1.0 - np.square(residual) / variance, axis=0, keepdims=True)
    return (
        Tensor4(assert_finite(grad_mu, op="base.grad_mu")),
        Tensor4(assert_finite(grad_log_sigma, op="base.grad_log_sigma")),
    )


def grad_z(base: BaseDistribution, z: Tensor4) -> Tensor4:
    """Per-element d(-log_prob)/dz = (z - mu) / sigma^2."""

    _check_event_shape(base, z)
    variance = np.exp(2.0 * base.log_sigma.data)
    return Tensor4(assert_finite((z.data - base.mu.data) / variance, op="base.grad_z"))


def standardize(base: BaseDistribution, z: Tensor4) -> Tensor4:
    _check_event_shape(base, z)
    return Tensor4((z.data - base.mu.data) / base.sigma)


def unstandardize(base: BaseDistribution, u: Tensor4) -> Tensor4:
    _check_event_shape(base, u)
    return Tensor4(u.data * base.sigma + base.mu.data)
