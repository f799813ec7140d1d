# This module holds the two optimizers used by training and the gradient clipping rule.
# Adam drives joint flow/base steps; plain SGD drives the dedicated base-only steps.
# Both work on flat float64 parameter vectors and return new vectors instead of mutating parameters.

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from src.numerics.tensor import assert_finite


@dataclass
class Adam:
    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    t: int = 0

    def __post_init__(self) -> None:
        self.m = np.zeros(self.size)
        self.v = np.zeros(self.size)

    def step(self, params: np.ndarray, grads: np.ndarray, *, lr: float) -> np.ndarray:
        if params.shape != self.m.shape or grads.shape != self.m.shape:
            raise ValueError(f"Adam expects vectors of shape {self.m.shape}")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * np.square(grads)
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        updated = params - lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return assert_finite(updated, op="adam.step")


def sgd_step(params: np.ndarray, grads: np.ndarray, *, lr: float) -> np.ndarray:
    return assert_finite(params - lr * grads, op="sgd.step")


def clip_by_global_norm(grads: np.ndarray, max_norm: float) -> tuple[np.ndarray, float, bool]:
    """Rescale `grads` so its L2 norm is at most `max_norm`; direction is preserved."""

    norm = float(np.linalg.norm(grads))
    if norm > max_norm:
        return grads * (max_norm / norm), norm, True
    return grads, norm, False
