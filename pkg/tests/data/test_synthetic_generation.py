"""
Tests for synthetic feature-map generation and its anomaly patches.
It asserts expected behavior and guards against regressions in the corresponding component.
These tests are executed by `pytest` locally and in CI and should remain deterministic.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from src.common.errors import FormatError, InvalidSpecError
from src.data.synthetic import (
    Dataset,
    SyntheticSpec,
    build_warp,
    generate,
    oracle_anomaly_map,
    synthetic_spec_from_mapping,
)
from src.diagnostics.ks_statistics import ks_critical_value, ks_statistic
from src.evaluation.metrics import auroc, pixel_auroc
from src.flow.flow_model import forward
from src.numerics.tensor import Tensor4


def test_generation_is_deterministic(small_spec: SyntheticSpec) -> None:
    assert generate(small_spec).equals(generate(small_spec))
    assert not generate(small_spec).equals(generate(replace(small_spec, seed=4)))


def test_shapes_labels_and_masks(small_spec: SyntheticSpec) -> None:
    dataset = generate(small_spec)

    assert dataset.train.shape == (8, 2, 4, 4)
    assert dataset.test.shape == (8, 2, 4, 4)
    assert dataset.test_pixel_masks.shape == (8, 1, 4, 4)
    np.testing.assert_array_equal(dataset.test_image_labels, [0, 0, 0, 0, 1, 1, 1, 1])
    per_image = dataset.test_pixel_masks.data.reshape(8, -1).sum(axis=1)
    np.testing.assert_array_equal(per_image, [0, 0, 0, 0, 4, 4, 4, 4])


def test_patches_only_touch_masked_pixels(small_spec: SyntheticSpec) -> None:
    plain = generate(replace(small_spec, patch_magnitude=0.0))
    patched = generate(small_spec)

    np.testing.assert_array_equal(plain.train.data, patched.train.data)
    np.testing.assert_array_equal(plain.test_pixel_masks.data, patched.test_pixel_masks.data)
    difference = patched.test.data - plain.test.data
    outside = np.broadcast_to(patched.test_pixel_masks.data == 0.0, difference.shape)
    assert np.all(difference[outside] == 0.0)
    for index in range(4, 8):
        inside = difference[index][:, patched.test_pixel_masks.data[index, 0] == 1.0]
        touched = np.any(inside != 0.0, axis=1)
        assert touched.sum() == small_spec.patch_channels
        np.testing.assert_allclose(np.abs(inside[touched]), small_spec.patch_magnitude, rtol=1e-12)


def test_identity_warp_gives_planted_gaussian() -> None:
    spec = SyntheticSpec(
        shape=(2, 8, 8),
        latent_mean=0.0,
        latent_std=1.0,
        warp_depth=0,
        n_train_normal=256,
        n_test_normal=0,
        n_test_anomalous=0,
    )

    values = generate(spec).train.data

    assert values.mean() == pytest.approx(0.0, abs=0.05)
    assert values.std() == pytest.approx(1.0, abs=0.05)
    assert ks_statistic(values[:, 0].ravel()) < 2 * ks_critical_value(values[:, 0].size)


def test_inverting_the_warp_recovers_the_planted_gaussian() -> None:
    spec = SyntheticSpec(n_train_normal=128, n_test_normal=0, n_test_anomalous=0)
    assert spec.warp_depth > 0

    latents, _ = forward(build_warp(spec), generate(spec).train)
    standardized = (latents.data - spec.latent_mean) / spec.latent_std

    for channel in range(spec.channels):
        samples = standardized[:, channel].ravel()
        assert ks_statistic(samples) < 2 * ks_critical_value(samples.size)


def test_oracle_detects_default_anomalies() -> None:
    spec = SyntheticSpec()
    dataset = generate(spec)

    result = oracle_anomaly_map(spec, dataset.test)

    assert pixel_auroc(result.anomaly_map, dataset.test_pixel_masks) > 0.95
    assert auroc(result.image_scores, dataset.test_image_labels) > 0.95


def test_zero_magnitude_patches_are_undetectable() -> None:
    spec = SyntheticSpec(patch_magnitude=0.0, n_test_normal=64, n_test_anomalous=64)
    dataset = generate(spec)

    result = oracle_anomaly_map(spec, dataset.test)

    assert pixel_auroc(result.anomaly_map, dataset.test_pixel_masks) == pytest.approx(0.5, abs=0.1)


def test_patch_channels_round_with_floor_of_one() -> None:
    assert SyntheticSpec(shape=(4, 8, 8), patch_fraction=0.5).patch_channels == 2
    assert SyntheticSpec(shape=(3, 8, 8), patch_fraction=0.1).patch_channels == 1
    assert SyntheticSpec(shape=(3, 8, 8), patch_fraction=1.0).patch_channels == 3


@pytest.mark.parametrize(
    "changes",
    [
        {"patch_size": 9},
        {"patch_fraction": 0.0},
        {"latent_std": 0.0},
        {"shape": (4, 8)},
        {"n_train_normal": 0},
        {"patch_magnitude": -1.0},
    ],
)
def test_invalid_specs_are_rejected(changes: dict) -> None:
    with pytest.raises(InvalidSpecError):
        synthetic_spec_from_mapping({**SyntheticSpec().to_dict(), **changes})


def test_spec_mapping_rejects_unknown_keys() -> None:
    with pytest.raises(InvalidSpecError):
        synthetic_spec_from_mapping({"colour": "red"})


def test_spec_round_trips_through_mapping(small_spec: SyntheticSpec) -> None:
    assert synthetic_spec_from_mapping(small_spec.to_dict()) == small_spec


def test_dataset_rejects_inconsistent_masks(small_spec: SyntheticSpec) -> None:
    dataset = generate(small_spec)
    masks = dataset.test_pixel_masks.numpy()
    masks[0, 0, 0, 0] = 1.0

    with pytest.raises(FormatError):
        Dataset(
            train=dataset.train,
            test=dataset.test,
            test_image_labels=dataset.test_image_labels,
            test_pixel_masks=Tensor4(masks),
        )
    with pytest.raises(FormatError):
        Dataset(
            train=Tensor4.zeros((2, 3, 4, 4)),
            test=dataset.test,
            test_image_labels=dataset.test_image_labels,
            test_pixel_masks=dataset.test_pixel_masks,
        )
