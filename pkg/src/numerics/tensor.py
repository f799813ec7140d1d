"""
Shaped float64 feature tensors and the elementwise/reduction ops every other package builds on.
Tensors are immutable values: every op returns a new tensor and asserts that its output is finite.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.common.errors import DomainError, NonFiniteError, ShapeMismatchError

AXIS_NAMES: tuple[str, ...] = ("B", "C", "H", "W")
ElementwiseOp = Literal["add", "sub", "mul", "div", "exp", "ln", "square"]
ReduceKind = Literal["mean", "sum", "max"]

_UNARY_OPS = {"exp", "ln", "square"}
_BINARY_OPS = {"add", "sub", "mul", "div"}


def assert_finite(values: np.ndarray, *, op: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        bad = int(np.size(values) - np.count_nonzero(np.isfinite(values)))
        raise NonFiniteError(
            f"{op} produced {bad} non-finite value(s)",
            details={"op": op, "non_finite_count": bad},
        )
    return values


@dataclass(frozen=True, eq=False)
class Tensor4:
    """Batch of feature maps with shape [B, C, H, W]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        array = np.array(self.data, dtype=np.float64, copy=True)
        if array.ndim != 4:
            raise ShapeMismatchError(
                f"Tensor4 requires 4 dimensions, got shape {array.shape}",
                details={"shape": list(array.shape)},
            )
        assert_finite(array, op="Tensor4")
        array.setflags(write=False)
        object.__setattr__(self, "data", array)

    @classmethod
    def zeros(cls, shape: tuple[int, int, int, int]) -> Tensor4:
        return cls(np.zeros(shape, dtype=np.float64))

    @classmethod
    def full(cls, shape: tuple[int, int, int, int], value: float) -> Tensor4:
        return cls(np.full(shape, float(value), dtype=np.float64))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        b, c, h, w = self.data.shape
        return int(b), int(c), int(h), int(w)

    @property
    def batch(self) -> int:
        return self.shape[0]

    @property
    def channels(self) -> int:
        return self.shape[1]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.shape[2], self.shape[3]

    def numpy(self) -> np.ndarray:
        """Writable copy of the payload."""
        return np.array(self.data, copy=True)

    def take(self, indices: np.ndarray | list[int]) -> Tensor4:
        return Tensor4(self.data[np.asarray(indices, dtype=np.int64)])

    def equals(self, other: Tensor4) -> bool:
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self) -> str:
        return f"Tensor4(shape={self.shape})"


def concat_batch(tensors: Iterable[Tensor4]) -> Tensor4:
    items = list(tensors)
    if not items:
        raise ShapeMismatchError("concat_batch needs at least one tensor")
    tails = {t.shape[1:] for t in items}
    if len(tails) != 1:
        raise ShapeMismatchError("concat_batch needs equal (C, H, W)", details={"shapes": [t.shape for t in items]})
    return Tensor4(np.concatenate([t.data for t in items], axis=0))


def elementwise(op: ElementwiseOp, a: Tensor4, b: Tensor4 | float | None = None) -> Tensor4:
    if op in _UNARY_OPS:
        if op == "exp":
            out = np.exp(a.data)
        elif op == "square":
            out = np.square(a.data)
        else:
            if np.any(a.data <= 0.0):
                raise DomainError("ln of non-positive value", details={"op": "ln"})
            out = np.log(a.data)
        return Tensor4(assert_finite(out, op=op))

    if op not in _BINARY_OPS:
        raise ValueError(f"unknown elementwise op: {op!r}")
    if b is None:
        raise ValueError(f"{op} requires a second operand")

    if isinstance(b, Tensor4):
        if b.shape != a.shape:
            raise ShapeMismatchError(
                f"{op} shape mismatch: {a.shape} vs {b.shape}",
                details={"op": op, "left": list(a.shape), "right": list(b.shape)},
            )
        right: np.ndarray | float = b.data
    else:
        right = float(b)

    if op == "add":
        out = a.data + right
    elif op == "sub":
        out = a.data - right
    elif op == "mul":
        out = a.data * right
    else:
        if np.any(np.asarray(right) == 0.0):
            raise DomainError("division by zero", details={"op": "div"})
        out = a.data / right
    return Tensor4(assert_finite(out, op=op))


def _axis_indices(axes: Iterable[str | int]) -> tuple[int, ...]:
    resolved: set[int] = set()
    for axis in axes:
        if isinstance(axis, str):
            if axis not in AXIS_NAMES:
                raise ValueError(f"unknown axis {axis!r}; expected one of {AXIS_NAMES}")
            resolved.add(AXIS_NAMES.index(axis))
        else:
            if not 0 <= int(axis) < 4:
                raise ValueError(f"axis index out of range: {axis}")
            resolved.add(int(axis))
    return tuple(sorted(resolved))


def reduce(t: Tensor4, axes: Iterable[str | int], kind: ReduceKind) -> Tensor4:
    indices = _axis_indices(axes)
    if not indices:
        raise ValueError("reduce requires at least one axis")
    if kind == "mean":
        out = np.mean(t.data, axis=indices, keepdims=True)
    elif kind == "sum":
        out = np.sum(t.data, axis=indices, keepdims=True)
    elif kind == "max":
        out = np.max(t.data, axis=indices, keepdims=True)
    else:
        raise ValueError(f"unknown reduce kind: {kind!r}")
    return Tensor4(assert_finite(out, op=f"reduce_{kind}"))
