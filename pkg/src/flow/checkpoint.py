"""
Model checkpoints: flow parameters theta and base parameters (mu, log_sigma) in one binary file.
The JSON header records the architecture so the parameter blob can be reassembled bit-exactly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np

from src.base.base_distribution import BaseDistribution
from src.common.errors import FormatError
from src.flow.flow_model import FlowModel, build_flow
from src.numerics.binary_io import read_blob, write_blob

CHECKPOINT_MAGIC = b"AFCKPT01"
CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: Path,
    *,
    model: FlowModel,
    base: BaseDistribution,
    epoch: int | None = None,
) -> Path:
    c, h, w = base.event_shape
    if c != model.channels:
        raise ValueError(f"base has {c} channels but model has {model.channels}")
    header: dict[str, Any] = {
        "version": CHECKPOINT_VERSION,
        "C": model.channels,
        "depth": model.depth,
        "hidden_width": model.hidden_width,
        "parameter_count": model.parameter_count,
        "seed": model.seed,
        "H": h,
        "W": w,
        "base_parameter_count": 2 * base.dims,
        "epoch": epoch,
    }
    payload = np.concatenate([model.parameter_vector(), base.parameter_vector()])
    return write_blob(path, magic=CHECKPOINT_MAGIC, header=header, payload=payload)


def load_checkpoint(path: Path) -> tuple[FlowModel, BaseDistribution, dict[str, Any]]:
    header, payload = read_blob(path, magic=CHECKPOINT_MAGIC)
    required = {"version", "C", "depth", "hidden_width", "parameter_count", "seed", "H", "W", "base_parameter_count"}
    missing = sorted(required.difference(header))
    if missing:
        raise FormatError(f"checkpoint header missing keys: {missing}", details={"path": str(path)})
    if int(header["version"]) != CHECKPOINT_VERSION:
        raise FormatError(
            f"unsupported checkpoint version {header['version']}",
            details={"path": str(path), "supported": CHECKPOINT_VERSION},
        )

    model = build_flow(
        channels=int(header["C"]),
        depth=int(header["depth"]),
        hidden_width=int(header["hidden_width"]),
        seed=int(header["seed"]),
        init="zeros",
    )
    base = BaseDistribution.standard(int(header["C"]), int(header["H"]), int(header["W"]))
    n_theta = int(header["parameter_count"])
    n_psi = int(header["base_parameter_count"])
    if n_theta != model.parameter_count or n_psi != 2 * base.dims:
        raise FormatError("checkpoint parameter counts disagree with its architecture", details={"path": str(path)})
    if payload.size != n_theta + n_psi:
        raise FormatError(
            f"checkpoint payload holds {payload.size} values, header declares {n_theta + n_psi}",
            details={"path": str(path)},
        )
    model = model.with_parameter_vector(payload[:n_theta])
    base = base.with_parameter_vector(payload[n_theta:])
    return model, base, header
