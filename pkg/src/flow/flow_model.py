"""
Invertible normalizing flow built from a stack of channel coupling layers.
Layers share weights across spatial positions, so a [B, C, H, W] tensor is processed as B*H*W channel rows.
The log-determinant of a sample sums the per-row log-determinants over positions and layers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.common.errors import ShapeMismatchError
from src.flow.coupling import PARAMETER_NAMES, CouplingLayer, LayerCache
from src.numerics.rng import Rng
from src.numerics.tensor import Tensor4, assert_finite

InitMode = Literal["zeros", "standard", "random"]

# "standard" leaves the output projection at zero so the model starts as the identity map.
DEFAULT_INPUT_SCALE = 1.0
DEFAULT_OUTPUT_SCALE = 0.5


@dataclass(frozen=True, eq=False)
class FlowModel:
    layers: tuple[CouplingLayer, ...]
    channels: int
    hidden_width: int
    seed: int = 0

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def parameter_count(self) -> int:
        return sum(layer.parameter_count for layer in self.layers)

    def parameter_vector(self) -> np.ndarray:
        chunks = [layer.parameters()[name].ravel() for layer in self.layers for name in PARAMETER_NAMES]
        if not chunks:
            return np.zeros(0)
        return np.concatenate(chunks)

    def with_parameter_vector(self, vector: np.ndarray) -> FlowModel:
        flat = np.asarray(vector, dtype=np.float64)
        if flat.shape != (self.parameter_count,):
            raise ShapeMismatchError(
                f"parameter vector has shape {flat.shape}, expected ({self.parameter_count},)",
                details={"expected": self.parameter_count},
            )
        offset = 0
        rebuilt: list[CouplingLayer] = []
        for layer in self.layers:
            params: dict[str, np.ndarray] = {}
            for name, shape in layer.parameter_shapes().items():
                size = int(np.prod(shape))
                params[name] = flat[offset : offset + size].reshape(shape)
                offset += size
            rebuilt.append(layer.with_parameters(params))
        return FlowModel(layers=tuple(rebuilt), channels=self.channels, hidden_width=self.hidden_width, seed=self.seed)


def build_flow(
    *,
    channels: int,
    depth: int,
    hidden_width: int | None = None,
    seed: int = 0,
    init: InitMode = "standard",
    input_scale: float = DEFAULT_INPUT_SCALE,
    output_scale: float = DEFAULT_OUTPUT_SCALE,
) -> FlowModel:
    if channels < 1:
        raise ValueError("channels must be >= 1")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    width = int(hidden_width) if hidden_width else 2 * channels
    rng = Rng(seed)

    layers: list[CouplingLayer] = []
    for index in range(depth):
        parity = index % 2
        if init == "zeros":
            layer = CouplingLayer.zeros(channels=channels, parity=parity, hidden_width=width)
        else:
            layer = CouplingLayer.random(
                channels=channels,
                parity=parity,
                hidden_width=width,
                rng=rng.derive(index),
                input_scale=input_scale,
                output_scale=0.0 if init == "standard" else output_scale,
            )
        layers.append(layer)
    return FlowModel(layers=tuple(layers), channels=channels, hidden_width=width, seed=seed)


def _to_rows(x: Tensor4) -> np.ndarray:
    b, c, h, w = x.shape
    return x.data.transpose(0, 2, 3, 1).reshape(b * h * w, c)


def _from_rows(rows: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    b, c, h, w = shape
    return rows.reshape(b, h, w, c).transpose(0, 3, 1, 2)


def _check_channels(model: FlowModel, t: Tensor4) -> None:
    if t.channels != model.channels:
        raise ShapeMismatchError(
            f"tensor has {t.channels} channels, model expects {model.channels}",
            details={"tensor_shape": list(t.shape), "model_channels": model.channels},
        )


def _forward_rows(model: FlowModel, x: Tensor4) -> tuple[np.ndarray, np.ndarray, list[LayerCache]]:
    _check_channels(model, x)
    rows = _to_rows(x)
    log_det = np.zeros(rows.shape[0])
    caches: list[LayerCache] = []
    for index, layer in enumerate(model.layers):
        rows, layer_log_det, cache = layer.forward_rows(rows)
        assert_finite(rows, op=f"flow.forward.layer{index}")
        log_det = log_det + layer_log_det
        caches.append(cache)
    return rows, assert_finite(log_det, op="flow.forward.logdet"), caches


def forward(model: FlowModel, x: Tensor4) -> tuple[Tensor4, np.ndarray]:
    """Map x to z; returns z and the per-sample log|det dz/dx|."""

    rows, log_det_rows, _ = _forward_rows(model, x)
    b, _, h, w = x.shape
    z = Tensor4(_from_rows(rows, x.shape))
    return z, log_det_rows.reshape(b, h * w).sum(axis=1)


def forward_map(model: FlowModel, x: Tensor4) -> tuple[Tensor4, Tensor4]:
    """Like `forward`, but keeps the log-determinant per spatial location, shape (B, 1, H, W)."""

    rows, log_det_rows, _ = _forward_rows(model, x)
    b, _, h, w = x.shape
    return Tensor4(_from_rows(rows, x.shape)), Tensor4(log_det_rows.reshape(b, 1, h, w))


def inverse_and_log_det(model: FlowModel, z: Tensor4) -> tuple[Tensor4, np.ndarray]:
    _check_channels(model, z)
    rows = _to_rows(z)
    log_det = np.zeros(rows.shape[0])
    for index in reversed(range(model.depth)):
        rows, layer_log_det = model.layers[index].inverse_rows(rows)
        assert_finite(rows, op=f"flow.inverse.layer{index}")
        log_det = log_det + layer_log_det
    b, _, h, w = z.shape
    return Tensor4(_from_rows(rows, z.shape)), log_det.reshape(b, h * w).sum(axis=1)


def inverse(model: FlowModel, z: Tensor4) -> Tensor4:
    x, _ = inverse_and_log_det(model, z)
    return x


def backward(
    model: FlowModel,
    x: Tensor4,
    grad_z: Tensor4,
    grad_log_det: np.ndarray,
) -> tuple[np.ndarray, Tensor4]:
    """Reverse-mode gradients of a scalar loss L(z, logdet).

    grad_z is dL/dz with the shape of x; grad_log_det is dL/dlogdet per sample, shape (B,).
    Returns (dL/dθ as a flat vector ordered like `parameter_vector`, dL/dx).
    """

    if grad_z.shape != x.shape:
        raise ShapeMismatchError(
            f"grad_z shape {grad_z.shape} does not match input shape {x.shape}",
            details={"grad_z": list(grad_z.shape), "x": list(x.shape)},
        )
    b, _, h, w = x.shape
    upstream_log_det = np.asarray(grad_log_det, dtype=np.float64)
    if upstream_log_det.shape != (b,):
        raise ShapeMismatchError(
            f"grad_log_det must have shape ({b},), got {upstream_log_det.shape}",
            details={"batch": b},
        )

    _, _, caches = _forward_rows(model, x)
    grad_rows = _to_rows(grad_z)
    row_log_det = np.repeat(upstream_log_det, h * w)

    layer_grads: list[dict[str, np.ndarray]] = [{} for _ in model.layers]
    for index in reversed(range(model.depth)):
        layer_grads[index], grad_rows = model.layers[index].backward_rows(caches[index], grad_rows, row_log_det)

    chunks = [layer_grads[i][name].ravel() for i in range(model.depth) for name in PARAMETER_NAMES]
    grad_theta = np.concatenate(chunks) if chunks else np.zeros(0)
    return grad_theta, Tensor4(_from_rows(grad_rows, x.shape))
