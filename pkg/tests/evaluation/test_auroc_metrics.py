"""
Tests for image and pixel AUROC.
It asserts expected behavior and guards against regressions in the corresponding component.
These tests are executed by `pytest` locally and in CI and should remain deterministic.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from src.common.errors import DegenerateLabelsError, FormatError, ShapeMismatchError
from src.evaluation.metrics import auroc, pixel_auroc
from src.numerics.rng import Rng
from src.numerics.tensor import Tensor4


def _pairwise(scores: np.ndarray, labels: np.ndarray) -> float:
    positives = scores[labels == 1]
    negatives = scores[labels == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in positives for n in negatives)
    return wins / (positives.size * negatives.size)


labelled_scores = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(-5, 5).map(float), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda labels: 0 < sum(labels) < len(labels)),
    )
)


def test_perfect_and_reversed_ranking() -> None:
    labels = np.array([0, 0, 1, 1])

    assert auroc(np.array([0.1, 0.2, 0.8, 0.9]), labels) == 1.0
    assert auroc(np.array([0.9, 0.8, 0.2, 0.1]), labels) == 0.0


def test_all_ties_give_one_half() -> None:
    assert auroc(np.zeros(6), np.array([0, 1, 0, 1, 0, 1])) == pytest.approx(0.5)


def test_matches_sklearn_on_random_scores() -> None:
    rng = Rng(31)
    labels = (rng.uniform(200) < 0.3).astype(int)
    scores = np.round(rng.normal(200) + labels, 1)

    assert auroc(scores, labels) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(labelled_scores)
def test_matches_pairwise_counting(case: tuple[list[float], list[int]]) -> None:
    scores, labels = np.array(case[0]), np.array(case[1])

    assert auroc(scores, labels) == pytest.approx(_pairwise(scores, labels), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labelled_scores, st.floats(0.1, 10.0), st.floats(-5.0, 5.0))
def test_invariant_to_increasing_transforms(case: tuple[list[float], list[int]], scale: float, shift: float) -> None:
    scores, labels = np.array(case[0]), np.array(case[1])

    assert auroc(scale * scores + shift, labels) == pytest.approx(auroc(scores, labels), abs=1e-12)
    assert auroc(np.exp(scores), labels) == pytest.approx(auroc(scores, labels), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labelled_scores)
def test_negating_scores_complements_auroc(case: tuple[list[float], list[int]]) -> None:
    scores, labels = np.array(case[0]), np.array(case[1])

    assert auroc(-scores, labels) == pytest.approx(1.0 - auroc(scores, labels), abs=1e-12)


def test_degenerate_labels_are_rejected() -> None:
    with pytest.raises(DegenerateLabelsError):
        auroc(np.array([0.1, 0.2]), np.array([1, 1]))
    with pytest.raises(DegenerateLabelsError):
        auroc(np.array([0.1, 0.2]), np.array([0, 0]))


def test_length_mismatch_is_rejected() -> None:
    with pytest.raises(ShapeMismatchError):
        auroc(np.array([0.1, 0.2, 0.3]), np.array([0, 1]))


def test_pixel_auroc_pools_every_pixel() -> None:
    maps = Tensor4(Rng(32).normal((3, 1, 4, 4)))
    mask_values = np.zeros((3, 1, 4, 4))
    mask_values[1, 0, :2, :2] = 1.0
    mask_values[2, 0, 3, 3] = 1.0
    masks = Tensor4(mask_values)

    expected = roc_auc_score(mask_values.ravel(), maps.data.ravel())
    assert pixel_auroc(maps, masks) == pytest.approx(expected, abs=1e-12)


def test_pixel_auroc_rejects_bad_masks() -> None:
    maps = Tensor4.zeros((1, 1, 2, 2))

    with pytest.raises(FormatError):
        pixel_auroc(maps, Tensor4.full((1, 1, 2, 2), 0.5))
    with pytest.raises(ShapeMismatchError):
        pixel_auroc(maps, Tensor4.zeros((1, 1, 2, 3)))


def test_small_example_matches_pairwise_counting() -> None:
    scores = np.array([0.1, 0.4, 0.35, 0.8])
    labels = np.array([0, 0, 1, 1])

    assert auroc(scores, labels) == pytest.approx(0.75)
    assert auroc(scores, labels) == pytest.approx(_pairwise(scores, labels))


def test_random_maps_against_random_masks_are_near_chance() -> None:
    rng = Rng(33)
    maps = Tensor4(rng.normal((40, 1, 16, 16)))
    masks = Tensor4((rng.uniform((40, 1, 16, 16)) < 0.2).astype(np.float64))

    assert pixel_auroc(maps, masks) == pytest.approx(0.5, abs=0.02)
