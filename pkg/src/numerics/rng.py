"""
Seedable counter-based random streams.
Philox keeps streams identical across platforms, and per-sample streams are derived from (seed, index)
so generation is reproducible regardless of how work is split.
"""

from __future__ import annotations

import numpy as np

from src.numerics.tensor import Tensor4, assert_finite

MAX_SEED = 2**64 - 1


class Rng:
    def __init__(self, seed: int, *, stream: tuple[int, ...] = ()) -> None:
        if not 0 <= int(seed) <= MAX_SEED:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.stream = tuple(int(item) for item in stream)
        entropy = [self.seed, *self.stream]
        self._generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def derive(self, *index: int) -> Rng:
        """Independent child stream keyed by `index`; does not consume from this stream."""
        return Rng(self.seed, stream=(*self.stream, *index))

    def get_state(self) -> dict:
        return dict(self._generator.bit_generator.state)

    def set_state(self, state: dict) -> None:
        self._generator.bit_generator.state = state

    def normal(self, size: int | tuple[int, ...]) -> np.ndarray:
        return self._generator.standard_normal(size)

    def uniform(self, size: int | tuple[int, ...]) -> np.ndarray:
        return self._generator.random(size)

    def integers(self, low: int, high: int) -> int:
        return int(self._generator.integers(low, high))

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)


def gaussian_sample(rng: Rng, shape: tuple[int, int, int, int]) -> Tensor4:
    if len(shape) != 4 or any(int(dim) <= 0 for dim in shape):
        raise ValueError(f"shape must be four positive dimensions, got {shape}")
    values = rng.normal(tuple(int(dim) for dim in shape))
    return Tensor4(assert_finite(values, op="gaussian_sample"))
