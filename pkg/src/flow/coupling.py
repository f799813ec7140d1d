# This module implements one affine coupling layer acting on the channel vector of each spatial location.
# It exists so the flow stack, the synthetic-data warps and the gradient checks all share a single definition.
# The identity half feeds a one-hidden-layer tanh subnet that emits a bounded log-scale and a shift
# for the transformed half; forward, inverse and reverse-mode gradients are written out by hand.

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from src.common.errors import ShapeMismatchError
from src.numerics.rng import Rng
from src.numerics.tensor import assert_finite

SCALE_BOUND = 2.0
PARAMETER_NAMES: tuple[str, ...] = ("w1", "b1", "w2", "b2")


def channel_partition(channels: int, parity: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (identity, transformed) channel indices; parity 1 swaps the halves."""

    first = math.ceil(channels / 2)
    head = np.arange(0, first, dtype=np.int64)
    tail = np.arange(first, channels, dtype=np.int64)
    if parity % 2 == 0:
        return head, tail
    return tail, head


class LayerCache(NamedTuple):
    rows: np.ndarray
    hidden: np.ndarray
    squashed: np.ndarray
    scale: np.ndarray


@dataclass(frozen=True, eq=False)
class CouplingLayer:
    channels: int
    parity: int
    hidden_width: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    identity_idx: np.ndarray = field(init=False, repr=False)
    transformed_idx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        identity_idx, transformed_idx = channel_partition(self.channels, self.parity)
        object.__setattr__(self, "identity_idx", identity_idx)
        object.__setattr__(self, "transformed_idx", transformed_idx)
        expected = self.parameter_shapes()
        for name in PARAMETER_NAMES:
            array = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if array.shape != expected[name]:
                raise ShapeMismatchError(
                    f"coupling parameter {name} has shape {array.shape}, expected {expected[name]}",
                    details={"parameter": name},
                )
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def n_identity(self) -> int:
        return int(self.identity_idx.size)

    @property
    def n_transformed(self) -> int:
        return int(self.transformed_idx.size)

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        return _shapes(self.channels, self.parity, self.hidden_width)

    @property
    def parameter_count(self) -> int:
        return sum(int(np.prod(shape)) for shape in self.parameter_shapes().values())

    @classmethod
    def zeros(cls, *, channels: int, parity: int, hidden_width: int) -> CouplingLayer:
        shell = _shapes(channels, parity, hidden_width)
        return cls(channels=channels, parity=parity, hidden_width=hidden_width, **{k: np.zeros(v) for k, v in shell.items()})

    @classmethod
    def random(
        cls,
        *,
        channels: int,
        parity: int,
        hidden_width: int,
        rng: Rng,
        input_scale: float,
        output_scale: float,
    ) -> CouplingLayer:
        shell = _shapes(channels, parity, hidden_width)
        fan_in = max(shell["w1"][1], 1)
        if output_scale == 0.0:
            w2 = np.zeros(shell["w2"])
        else:
            w2 = rng.normal(shell["w2"]) * (output_scale / math.sqrt(hidden_width))
        return cls(
            channels=channels,
            parity=parity,
            hidden_width=hidden_width,
            w1=rng.normal(shell["w1"]) * (input_scale / math.sqrt(fan_in)),
            b1=np.zeros(shell["b1"]),
            w2=w2,
            b2=np.zeros(shell["b2"]),
        )

    def parameters(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMETER_NAMES}

    def with_parameters(self, params: dict[str, np.ndarray]) -> CouplingLayer:
        return CouplingLayer(
            channels=self.channels,
            parity=self.parity,
            hidden_width=self.hidden_width,
            **{name: params[name] for name in PARAMETER_NAMES},
        )

    def _subnet(self, identity_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        hidden = np.tanh(identity_rows @ self.w1.T + self.b1)
        out = hidden @ self.w2.T + self.b2
        m = self.n_transformed
        squashed = np.tanh(out[:, :m] / SCALE_BOUND)
        log_scale = SCALE_BOUND * squashed
        return hidden, squashed, log_scale, out[:, m:]

    def forward_rows(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, LayerCache]:
        """rows: (N, C). Returns (outputs, per-row log-determinant, cache)."""

        hidden, squashed, log_scale, shift = self._subnet(rows[:, self.identity_idx])
        scale = np.exp(log_scale)
        out = np.array(rows, copy=True)
        out[:, self.transformed_idx] = rows[:, self.transformed_idx] * scale + shift
        log_det = np.sum(log_scale, axis=1)
        return out, log_det, LayerCache(rows=rows, hidden=hidden, squashed=squashed, scale=scale)

    def inverse_rows(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        _, _, log_scale, shift = self._subnet(rows[:, self.identity_idx])
        out = np.array(rows, copy=True)
        out[:, self.transformed_idx] = (rows[:, self.transformed_idx] - shift) * np.exp(-log_scale)
        return out, -np.sum(log_scale, axis=1)

    def backward_rows(
        self,
        cache: LayerCache,
        grad_out: np.ndarray,
        grad_log_det: np.ndarray,
    ) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Reverse-mode pass for one layer.

        grad_out is dL/d(outputs) with shape (N, C); grad_log_det is dL/d(per-row log-det), shape (N,).
        Returns parameter gradients and dL/d(inputs).
        """

        rows = cache.rows
        x_id = rows[:, self.identity_idx]
        x_tr = rows[:, self.transformed_idx]
        g_tr = grad_out[:, self.transformed_idx]

        g_shift = g_tr
        g_log_scale = g_tr * x_tr * cache.scale + grad_log_det[:, None]
        g_raw = g_log_scale * (1.0 - np.square(cache.squashed))
        g_out = np.concatenate([g_raw, g_shift], axis=1)

        grad_w2 = g_out.T @ cache.hidden
        grad_b2 = np.sum(g_out, axis=0)
        g_pre = (g_out @ self.w2) * (1.0 - np.square(cache.hidden))
        grad_w1 = g_pre.T @ x_id
        grad_b1 = np.sum(g_pre, axis=0)

        grad_in = np.array(grad_out, copy=True)
        grad_in[:, self.transformed_idx] = g_tr * cache.scale
        grad_in[:, self.identity_idx] += g_pre @ self.w1

        grads = {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}
        for name, value in grads.items():
            assert_finite(value, op=f"coupling.backward.{name}")
        return grads, assert_finite(grad_in, op="coupling.backward.input")


def _shapes(channels: int, parity: int, hidden_width: int) -> dict[str, tuple[int, ...]]:
    if channels < 1 or hidden_width < 1:
        raise ValueError("channels and hidden_width must be >= 1")
    identity_idx, transformed_idx = channel_partition(channels, parity)
    return {
        "w1": (hidden_width, int(identity_idx.size)),
        "b1": (hidden_width,),
        "w2": (2 * int(transformed_idx.size), hidden_width),
        "b2": (2 * int(transformed_idx.size),),
    }
