# This module checks the divergence identity behind flow training on data whose density is known.
# Pushing samples through the flow must leave the KL divergence to the model unchanged, so the data-space
# and latent-space Monte-Carlo estimates agree exactly when computed on the same samples.
# GaussianSampler is the known-density source used by experiments and tests.

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from src.base.base_distribution import HALF_LOG_TWO_PI, BaseDistribution, log_prob
from src.common.errors import RequiresKnownDensityError
from src.flow.flow_model import FlowModel, forward
from src.numerics.rng import Rng
from src.numerics.tensor import Tensor4, assert_finite

MIN_KL_SAMPLES = 10_000


@dataclass(frozen=True)
class GaussianSampler:
    """Isotropic N(mean, std^2) over an event shape (C, H, W)."""

    mean: float = 0.0
    std: float = 1.0
    event_shape: tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self) -> None:
        if self.std <= 0:
            raise ValueError("std must be > 0")

    def sample(self, rng: Rng, n: int) -> Tensor4:
        return Tensor4(self.mean + self.std * rng.normal((n, *self.event_shape)))

    def log_density(self, x: Tensor4) -> np.ndarray:
        residual = (x.data - self.mean) / self.std
        terms = -HALF_LOG_TWO_PI - math.log(self.std) - 0.5 * np.square(residual)
        return terms.reshape(x.batch, -1).sum(axis=1)


class KlIdentityResult(NamedTuple):
    kl_x: float
    kl_z: float
    stderr_x: float
    stderr_z: float
    n: int

    def to_dict(self) -> dict[str, Any]:
        return self._asdict()


def kl_identity_check(
    model: FlowModel,
    base: BaseDistribution,
    sampler: Any,
    n: int,
    *,
    rng: Rng | None = None,
) -> KlIdentityResult:
    """Monte-Carlo KL(p*_X || p_X) and KL(p*_Z || p_Z) on shared samples."""

    log_density = getattr(sampler, "log_density", None)
    if not callable(log_density):
        raise RequiresKnownDensityError(
            "kl_identity_check needs a sampler with a known log-density",
            details={"sampler": type(sampler).__name__},
        )
    if n < MIN_KL_SAMPLES:
        raise ValueError(f"kl_identity_check needs n >= {MIN_KL_SAMPLES}, got {n}")

    x = sampler.sample(rng or Rng(0), n)
    z, log_det = forward(model, x)
    true_log_x = assert_finite(np.asarray(log_density(x), dtype=np.float64), op="kl.true_density")
    model_log_z = log_prob(base, z)

    # data space: the model density of x is the base density of z plus the log-determinant
    terms_x = true_log_x - (model_log_z + log_det)
    # latent space: the pushforward of the true density loses the log-determinant
    terms_z = (true_log_x - log_det) - model_log_z

    return KlIdentityResult(
        kl_x=float(terms_x.mean()),
        kl_z=float(terms_z.mean()),
        stderr_x=float(terms_x.std(ddof=1) / math.sqrt(n)),
        stderr_z=float(terms_z.std(ddof=1) / math.sqrt(n)),
        n=n,
    )
