"""
Synthetic feature maps for unsupervised anomaly detection without an image backbone.
Normal samples are a fixed random coupling warp, inverted, applied to planted N(latent_mean, latent_std^2) latents;
anomalies add a signed square patch to a subset of channels and record it in a pixel mask.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from src.base.base_distribution import HALF_LOG_TWO_PI
from src.common.errors import FormatError, InvalidSpecError
from src.flow.flow_model import FlowModel, build_flow, forward_map, inverse
from src.numerics.rng import Rng
from src.numerics.tensor import Tensor4
from src.scoring.anomaly_scoring import AnomalyResult, result_from_channel_nll

LOGGER = logging.getLogger("data")

# leading stream tag for per-sample draws; warp layers use single-index streams
SAMPLE_STREAM = 7919
SPLIT_TRAIN, SPLIT_TEST_NORMAL, SPLIT_TEST_ANOMALOUS = 0, 1, 2


@dataclass(frozen=True)
class SyntheticSpec:
    shape: tuple[int, int, int] = (4, 8, 8)
    latent_mean: float = 2.0
    latent_std: float = 0.5
    warp_depth: int = 2
    warp_scale: float = 0.5
    patch_fraction: float = 0.5
    patch_magnitude: float = 2.5
    patch_size: int = 3
    n_train_normal: int = 64
    n_test_normal: int = 32
    n_test_anomalous: int = 32
    seed: int = 25

    def __post_init__(self) -> None:
        shape = tuple(int(dim) for dim in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) != 3 or min(shape) < 1:
            raise InvalidSpecError("shape must be three positive dimensions (C, H, W)", details={"shape": list(shape)})
        _, height, width = shape
        if self.latent_std <= 0:
            raise InvalidSpecError("latent_std must be > 0", details={"latent_std": self.latent_std})
        if self.warp_depth < 0 or self.warp_scale < 0:
            raise InvalidSpecError("warp_depth and warp_scale must be >= 0")
        if not 1 <= self.patch_size <= min(height, width):
            raise InvalidSpecError(
                f"patch_size {self.patch_size} does not fit in ({height}, {width})",
                details={"patch_size": self.patch_size},
            )
        if not 0 < self.patch_fraction <= 1:
            raise InvalidSpecError("patch_fraction must be in (0, 1]", details={"patch_fraction": self.patch_fraction})
        if self.patch_magnitude < 0:
            raise InvalidSpecError("patch_magnitude must be >= 0")
        if self.n_train_normal < 1 or self.n_test_normal < 0 or self.n_test_anomalous < 0:
            raise InvalidSpecError("n_train_normal must be >= 1 and test counts >= 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpecError("seed must be an unsigned 64-bit integer", details={"seed": self.seed})

    @property
    def channels(self) -> int:
        return self.shape[0]

    @property
    def patch_channels(self) -> int:
        return max(1, round(self.patch_fraction * self.channels))

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        payload["shape"] = list(self.shape)
        return payload


def synthetic_spec_from_mapping(mapping: dict[str, Any] | None) -> SyntheticSpec:
    values = dict(mapping or {})
    known = {item.name for item in fields(SyntheticSpec)}
    unknown = sorted(set(values).difference(known))
    if unknown:
        raise InvalidSpecError(f"unknown dataset keys: {unknown}", details={"unknown": unknown})
    if "shape" in values:
        values["shape"] = tuple(values["shape"])
    try:
        return SyntheticSpec(**values)
    except (TypeError, ValueError) as exc:
        raise InvalidSpecError(f"invalid dataset spec: {exc}") from exc


@dataclass(frozen=True, eq=False)
class Dataset:
    train: Tensor4
    test: Tensor4
    test_image_labels: np.ndarray
    test_pixel_masks: Tensor4
    spec: SyntheticSpec | None = field(default=None)

    def __post_init__(self) -> None:
        labels = np.asarray(self.test_image_labels, dtype=np.int64).copy()
        labels.setflags(write=False)
        object.__setattr__(self, "test_image_labels", labels)

        if self.train.shape[1:] != self.test.shape[1:]:
            raise FormatError(
                "train and test features disagree on (C, H, W)",
                details={"train": list(self.train.shape), "test": list(self.test.shape)},
            )
        b, _, h, w = self.test.shape
        if self.test_pixel_masks.shape != (b, 1, h, w):
            raise FormatError(
                f"pixel masks must have shape {(b, 1, h, w)}, got {self.test_pixel_masks.shape}",
                details={"masks": list(self.test_pixel_masks.shape)},
            )
        if labels.shape != (b,) or not np.isin(labels, (0, 1)).all():
            raise FormatError("test image labels must be one binary label per test sample")
        if not np.isin(self.test_pixel_masks.data, (0.0, 1.0)).all():
            raise FormatError("pixel masks must be binary")
        has_pixels = self.test_pixel_masks.data.reshape(b, h * w).any(axis=1)
        if np.any(has_pixels != labels.astype(bool)):
            raise FormatError("anomalous images need a nonempty mask and normal images an empty one")

    @property
    def event_shape(self) -> tuple[int, int, int]:
        _, c, h, w = self.train.shape
        return c, h, w

    def equals(self, other: Dataset) -> bool:
        return (
            self.train.equals(other.train)
            and self.test.equals(other.test)
            and np.array_equal(self.test_image_labels, other.test_image_labels)
            and self.test_pixel_masks.equals(other.test_pixel_masks)
        )

    def summary(self) -> dict[str, Any]:
        return {
            "event_shape": list(self.event_shape),
            "n_train": self.train.batch,
            "n_test": self.test.batch,
            "n_test_anomalous": int(self.test_image_labels.sum()),
        }


def build_warp(spec: SyntheticSpec) -> FlowModel:
    """The fixed random coupling stack that shapes the normal data."""

    return build_flow(
        channels=spec.channels,
        depth=spec.warp_depth,
        seed=spec.seed,
        init="random",
        output_scale=spec.warp_scale,
    )


def _latents(spec: SyntheticSpec, split: int, count: int) -> np.ndarray:
    root = Rng(spec.seed)
    out = np.empty((count, *spec.shape))
    for index in range(count):
        out[index] = spec.latent_mean + spec.latent_std * root.derive(SAMPLE_STREAM, split, index).normal(spec.shape)
    return out


def _normals(spec: SyntheticSpec, warp: FlowModel, split: int, count: int) -> Tensor4:
    return inverse(warp, Tensor4(_latents(spec, split, count)))


def _inject_patches(spec: SyntheticSpec, normals: Tensor4) -> tuple[np.ndarray, np.ndarray]:
    _, height, width = spec.shape
    size = spec.patch_size
    values = normals.numpy()
    masks = np.zeros((normals.batch, 1, height, width))
    root = Rng(spec.seed)
    for index in range(normals.batch):
        rng = root.derive(SAMPLE_STREAM, SPLIT_TEST_ANOMALOUS, index, 1)
        top = rng.integers(0, height - size + 1)
        left = rng.integers(0, width - size + 1)
        channels = np.sort(rng.permutation(spec.channels)[: spec.patch_channels])
        sign = 1.0 if rng.integers(0, 2) else -1.0
        values[index, channels, top : top + size, left : left + size] += sign * spec.patch_magnitude
        masks[index, 0, top : top + size, left : left + size] = 1.0
    return values, masks


def generate(spec: SyntheticSpec) -> Dataset:
    warp = build_warp(spec)
    train = _normals(spec, warp, SPLIT_TRAIN, spec.n_train_normal)
    test_normal = _normals(spec, warp, SPLIT_TEST_NORMAL, spec.n_test_normal)
    anomalous, anomalous_masks = _inject_patches(spec, _normals(spec, warp, SPLIT_TEST_ANOMALOUS, spec.n_test_anomalous))

    _, height, width = spec.shape
    test = np.concatenate([test_normal.data, anomalous], axis=0)
    masks = np.concatenate([np.zeros((spec.n_test_normal, 1, height, width)), anomalous_masks], axis=0)
    labels = np.concatenate([np.zeros(spec.n_test_normal, dtype=np.int64), np.ones(spec.n_test_anomalous, dtype=np.int64)])

    dataset = Dataset(train=train, test=Tensor4(test), test_image_labels=labels, test_pixel_masks=Tensor4(masks), spec=spec)
    LOGGER.info("generated synthetic dataset %s", dataset.summary())
    return dataset


def oracle_anomaly_map(spec: SyntheticSpec, x: Tensor4) -> AnomalyResult:
    """Anomaly map from the true generative density: the known warp plus the planted latent Gaussian."""

    latents, log_det = forward_map(build_warp(spec), x)
    residual = (latents.data - spec.latent_mean) / spec.latent_std
    nll = 0.5 * np.square(residual) + math.log(spec.latent_std) + HALF_LOG_TWO_PI
    per_location = (np.sum(nll, axis=1) - log_det.data[:, 0]) / spec.channels
    return result_from_channel_nll(per_location)
