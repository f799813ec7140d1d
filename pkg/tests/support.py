"""
Numerical helpers shared by tests: relative error and central finite differences over flat parameter vectors.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np


def relative_error(actual: np.ndarray, expected: np.ndarray, floor: float = 1e-8) -> float:
    """Largest per-element |actual - expected| / max(|actual|, |expected|, floor)."""

    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(actual), np.abs(expected)), floor)
    return float(np.max(np.abs(actual - expected) / scale))


def central_differences(loss: Callable[[np.ndarray], float], point: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    point = np.asarray(point, dtype=np.float64)
    grads = np.zeros_like(point)
    for index in range(point.size):
        shift = np.zeros_like(point)
        shift[index] = eps
        grads[index] = (loss(point + shift) - loss(point - shift)) / (2.0 * eps)
    return grads
