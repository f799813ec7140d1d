"""
Evaluation helpers for anomaly scores: rank-based AUROC at image and pixel level, and the stability report.
Stability summarizes AUROC over a late-training window (mean, unbiased std) next to the best AUROC of the run.
Ties share midranks, so repeated score values earn half credit.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.stats import rankdata

from src.common.errors import DegenerateLabelsError, EmptyWindowError, FormatError, ShapeMismatchError
from src.numerics.tensor import Tensor4, assert_finite


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """P(score+ > score-) + 0.5 * P(tie), via the Mann-Whitney rank sum."""

    values = assert_finite(np.asarray(scores, dtype=np.float64).ravel(), op="auroc.scores")
    truth = np.asarray(labels).ravel()
    if values.shape != truth.shape:
        raise ShapeMismatchError(
            f"{values.size} scores but {truth.size} labels",
            details={"scores": values.size, "labels": truth.size},
        )
    positive = truth.astype(bool)
    n_pos = int(positive.sum())
    n_neg = int(truth.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            "AUROC needs at least one positive and one negative label",
            details={"positives": n_pos, "negatives": n_neg},
        )
    ranks = rankdata(values, method="average")
    u_statistic = float(ranks[positive].sum()) - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def pixel_auroc(maps: Tensor4, masks: Tensor4) -> float:
    """AUROC over every pixel of every image, pooled."""

    if maps.shape != masks.shape:
        raise ShapeMismatchError(
            f"anomaly maps {maps.shape} and masks {masks.shape} differ",
            details={"maps": list(maps.shape), "masks": list(masks.shape)},
        )
    if not np.isin(masks.data, (0.0, 1.0)).all():
        raise FormatError("pixel masks must be binary")
    return auroc(maps.data.ravel(), masks.data.ravel())


def default_window(epochs: int) -> tuple[int, int]:
    """Final half of the run, inclusive."""

    return epochs // 2, epochs - 1


@dataclass(frozen=True)
class StabilityReport:
    best_auroc: float
    best_epoch: int
    window: tuple[int, int]
    mean_auroc: float
    std_auroc: float
    per_epoch: list[tuple[int, float]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "best_auroc": self.best_auroc,
            "best_epoch": self.best_epoch,
            "window": list(self.window),
            "mean_auroc": self.mean_auroc,
            "std_auroc": self.std_auroc,
            "per_epoch": [[epoch, value] for epoch, value in self.per_epoch],
        }


def stability(per_epoch_aurocs: Sequence[tuple[int, float]], window: tuple[int, int]) -> StabilityReport:
    """Best AUROC over all epochs; mean and unbiased std over epochs inside the inclusive window."""

    recorded = [(int(epoch), float(value)) for epoch, value in per_epoch_aurocs]
    start, end = int(window[0]), int(window[1])
    inside = np.array([value for epoch, value in recorded if start <= epoch <= end])
    if inside.size == 0:
        raise EmptyWindowError(
            f"no AUROC recorded inside epochs [{start}, {end}]",
            details={"window": [start, end], "recorded": len(recorded)},
        )
    best_epoch, best = max(recorded, key=lambda item: item[1])
    std = float(np.std(inside, ddof=1)) if inside.size > 1 else 0.0
    return StabilityReport(
        best_auroc=best,
        best_epoch=best_epoch,
        window=(start, end),
        mean_auroc=float(inside.mean()),
        std_auroc=std,
        per_epoch=recorded,
    )
