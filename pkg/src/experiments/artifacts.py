# This module writes experiment artifacts: JSON reports, per-epoch metric CSVs and the long-format curve CSV.
# Artifacts never carry timestamps or host details, so reruns of the same config are byte-identical.
# Non-finite floats are written as null to keep the JSON strict.

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

METRIC_COLUMNS = ["epoch", "loss", "auroc_pixel", "auroc_image", "ks_mean"]
LONG_COLUMNS = ["run", "epoch", "metric", "value"]


def sanitize_json_payload(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): sanitize_json_payload(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize_json_payload(item) for item in value]
    if isinstance(value, np.ndarray):
        return sanitize_json_payload(value.tolist())
    if isinstance(value, np.generic):
        return sanitize_json_payload(value.item())
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    return value


def write_json(path: Path, payload: dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(sanitize_json_payload(payload), indent=2, default=str, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_frame(path: Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def metrics_frame(rows: Sequence[dict[str, Any]]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows))
    for column in METRIC_COLUMNS:
        if column not in frame.columns:
            frame[column] = np.nan
    return frame[METRIC_COLUMNS]


def long_metrics_frame(run: str, rows: Sequence[dict[str, Any]]) -> pd.DataFrame:
    records = [
        {"run": run, "epoch": row["epoch"], "metric": metric, "value": row.get(metric)}
        for row in rows
        for metric in METRIC_COLUMNS[1:]
        if row.get(metric) is not None
    ]
    return pd.DataFrame(records, columns=LONG_COLUMNS)
