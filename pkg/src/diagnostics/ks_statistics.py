"""
Normalization diagnostics for flow outputs: one-sample Kolmogorov-Smirnov statistics against the standard normal,
per channel and per location, plus mean-square and mean-shift summaries.
Statistics are reported directly; no p-values are computed.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import erfc

from src.base.base_distribution import BaseDistribution, standardize
from src.common.errors import EmptyInputError, ShapeMismatchError
from src.numerics.tensor import Tensor4, assert_finite

Z_95 = 1.96
KS_CRITICAL_5PCT = 1.36


def normal_cdf(x: np.ndarray | float) -> np.ndarray:
    """Standard normal CDF via the complementary error function (accurate in both tails)."""

    return 0.5 * erfc(-np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


def ks_critical_value(n: int) -> float:
    """Asymptotic 5% critical value of the one-sample KS statistic."""

    return KS_CRITICAL_5PCT / math.sqrt(n)


def ks_statistic(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray] = normal_cdf) -> float:
    """Exact sup |F_n - F| evaluated at the order statistics."""

    values = np.asarray(samples, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyInputError("ks_statistic needs at least one sample")
    assert_finite(values, op="ks_statistic")
    n = values.size
    reference = np.asarray(cdf(np.sort(values)), dtype=np.float64)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    upper = np.abs(ranks / n - reference)
    lower = np.abs((ranks - 1.0) / n - reference)
    return float(max(upper.max(), lower.max()))


@dataclass(frozen=True)
class KsReport:
    per_channel_ks: tuple[float, ...]
    mean: float
    ci95_halfwidth: float
    n_samples: int
    snapshots: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_channel_ks": list(self.per_channel_ks),
            "mean": self.mean,
            "ci95_halfwidth": self.ci95_halfwidth,
            "n_samples": self.n_samples,
            "snapshots": self.snapshots,
        }


def _ci95(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(Z_95 * np.std(values, ddof=1) / math.sqrt(values.size))


def _values_for(z: Tensor4, base: BaseDistribution | None) -> Tensor4:
    return z if base is None else standardize(base, z)


def channel_ks_report(z: Tensor4, base: BaseDistribution | None = None) -> KsReport:
    """KS of every channel's pooled (B, H, W) values against N(0, 1); standardized by `base` when given."""

    values = _values_for(z, base)
    b, c, h, w = values.shape
    n = b * h * w
    if n < 2:
        raise EmptyInputError("channel_ks_report needs at least two values per channel", details={"shape": [b, c, h, w]})
    per_channel = np.array([ks_statistic(values.data[:, channel].ravel()) for channel in range(c)])
    return KsReport(
        per_channel_ks=tuple(float(item) for item in per_channel),
        mean=float(per_channel.mean()),
        ci95_halfwidth=_ci95(per_channel),
        n_samples=n,
    )


def pool_ks_reports(reports: Sequence[KsReport]) -> KsReport:
    """Pool reports measured at several epochs; the interval uses all channel-by-epoch values."""

    if not reports:
        raise EmptyInputError("pool_ks_reports needs at least one report")
    widths = {len(report.per_channel_ks) for report in reports}
    if len(widths) != 1:
        raise ShapeMismatchError("KS reports disagree on channel count", details={"channels": sorted(widths)})
    grid = np.array([report.per_channel_ks for report in reports])
    return KsReport(
        per_channel_ks=tuple(float(item) for item in grid.mean(axis=0)),
        mean=float(grid.mean()),
        ci95_halfwidth=_ci95(grid.ravel()),
        n_samples=reports[-1].n_samples,
        snapshots=sum(report.snapshots for report in reports),
    )


def location_ks_map(z: Tensor4, base: BaseDistribution | None = None) -> np.ndarray:
    """KS statistic across the batch for every (c, h, w); returns an array of shape (C, H, W)."""

    values = _values_for(z, base).data
    n = values.shape[0]
    if n < 2:
        raise EmptyInputError("location_ks_map needs a batch of at least two samples")
    reference = normal_cdf(np.sort(values, axis=0))
    ranks = np.arange(1, n + 1, dtype=np.float64).reshape(n, 1, 1, 1)
    upper = np.abs(ranks / n - reference).max(axis=0)
    lower = np.abs((ranks - 1.0) / n - reference).max(axis=0)
    return np.maximum(upper, lower)


def mean_square_statistic(z: Tensor4) -> float:
    return float(np.mean(np.square(z.data)))


@dataclass(frozen=True)
class MeanShiftSummary:
    mean_abs_mean: float
    mean_std: float
    shifted_fraction: float
    mean_square: float

    def to_dict(self) -> dict[str, float]:
        return {
            "mean_abs_mean": self.mean_abs_mean,
            "mean_std": self.mean_std,
            "shifted_fraction": self.shifted_fraction,
            "mean_square": self.mean_square,
        }


def mean_shift_summary(z: Tensor4, base: BaseDistribution | None = None) -> MeanShiftSummary:
    """Per-dimension output moments; a dimension counts as shifted when its mean is beyond two standard errors of 0."""

    values = _values_for(z, base).data
    n = values.shape[0]
    if n < 2:
        raise EmptyInputError("mean_shift_summary needs a batch of at least two samples")
    means = values.mean(axis=0)
    stds = values.std(axis=0, ddof=1)
    stderr = stds / math.sqrt(n)
    shifted = np.abs(means) > 2.0 * stderr
    return MeanShiftSummary(
        mean_abs_mean=float(np.abs(means).mean()),
        mean_std=float(stds.mean()),
        shifted_fraction=float(shifted.mean()),
        mean_square=float(np.mean(np.square(values))),
    )
