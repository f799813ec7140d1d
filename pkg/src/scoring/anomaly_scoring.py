# This module turns flow outputs into per-location anomaly maps and per-image anomaly scores.
# Each location's score is the negated exponential of the channel-mean log-likelihood, so values are below zero
# and a score closer to zero is more anomalous.
# The learned-base variant adds the Mahalanobis term and log-variance of the fitted diagonal Gaussian.

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.base.base_distribution import BaseDistribution
from src.common.errors import ShapeMismatchError
from src.numerics.tensor import Tensor4, assert_finite


@dataclass(frozen=True)
class AnomalyResult:
    anomaly_map: Tensor4
    image_scores: np.ndarray

    def __post_init__(self) -> None:
        if self.anomaly_map.channels != 1:
            raise ShapeMismatchError("anomaly maps have a single channel", details={"shape": list(self.anomaly_map.shape)})
        if np.shape(self.image_scores) != (self.anomaly_map.batch,):
            raise ShapeMismatchError("one image score per anomaly map is required")


def result_from_channel_nll(per_location: np.ndarray) -> AnomalyResult:
    """per_location: (B, H, W) channel-mean negative log-density terms; score = -exp(-per_location)."""

    scores = -np.exp(-per_location)
    anomaly_map = Tensor4(assert_finite(scores[:, None, :, :], op="scoring.map"))
    return AnomalyResult(anomaly_map=anomaly_map, image_scores=_spatial_max(anomaly_map))


def _spatial_max(anomaly_map: Tensor4) -> np.ndarray:
    return anomaly_map.data.reshape(anomaly_map.batch, -1).max(axis=1)


def score_map_fixed(z: Tensor4) -> AnomalyResult:
    """Anomaly map under the fixed N(0, I) base."""

    quadratic = np.square(z.data)
    return result_from_channel_nll(np.sum(quadratic, axis=1) / (2.0 * z.channels))


def score_map_learned(z: Tensor4, base: BaseDistribution) -> AnomalyResult:
    """Anomaly map under a learned diagonal base; with mu = 0 and log_sigma = 0 it equals `score_map_fixed`."""

    if z.shape[1:] != base.event_shape:
        raise ShapeMismatchError(
            f"z event shape {z.shape[1:]} does not match base {base.event_shape}",
            details={"z": list(z.shape), "base": list(base.event_shape)},
        )
    log_sigma = base.log_sigma.data
    residual = z.data - base.mu.data
    quadratic = np.square(residual) / np.exp(2.0 * log_sigma) + 2.0 * log_sigma
    return result_from_channel_nll(np.sum(quadratic, axis=1) / (2.0 * z.channels))


def image_score(result: AnomalyResult) -> np.ndarray:
    """Image-level score: the maximum of the anomaly map over all locations."""

    return _spatial_max(result.anomaly_map)
