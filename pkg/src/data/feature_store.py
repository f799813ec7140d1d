# This module stores and loads feature datasets on disk so externally extracted features can replace synthetic ones.
# A dataset directory holds a manifest.json naming its files, tensor container files for train/test features and
# pixel masks, and a labels CSV (sample_id, label). Tensor files use the shared binary container with an "AFTENSR1" magic.
# Every malformed input surfaces as a FormatError naming the offending file.

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from src.common.errors import FormatError, MissingMaskError
from src.data.synthetic import Dataset, synthetic_spec_from_mapping
from src.numerics.binary_io import read_blob, write_blob
from src.numerics.tensor import Tensor4

LOGGER = logging.getLogger("data")

TENSOR_MAGIC = b"AFTENSR1"
MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "altflow-dataset"
MANIFEST_VERSION = 1
DEFAULT_FILES = {
    "train": "train.aft",
    "test": "test.aft",
    "masks": "masks.aft",
    "labels": "labels.csv",
}


def write_tensor(path: Path, tensor: Tensor4) -> Path:
    header = {"dtype": "f64", "shape": list(tensor.shape), "endianness": "little"}
    return write_blob(path, magic=TENSOR_MAGIC, header=header, payload=tensor.data.ravel())


def read_tensor(path: Path) -> Tensor4:
    header, payload = read_blob(path, magic=TENSOR_MAGIC)
    if header.get("dtype") != "f64" or header.get("endianness") != "little":
        raise FormatError(
            f"{Path(path).name} must hold little-endian f64 values",
            details={"path": str(path), "dtype": header.get("dtype"), "endianness": header.get("endianness")},
        )
    shape = header.get("shape")
    if not isinstance(shape, list) or len(shape) != 4 or any(not isinstance(dim, int) or dim < 0 for dim in shape):
        raise FormatError(f"{Path(path).name} declares an invalid shape {shape!r}", details={"path": str(path)})
    expected = int(np.prod(shape))
    if payload.size != expected:
        raise FormatError(
            f"{Path(path).name} declares {expected} values but holds {payload.size}",
            details={"path": str(path), "shape": shape, "payload_values": int(payload.size)},
        )
    if not np.all(np.isfinite(payload)):
        raise FormatError(f"{Path(path).name} contains non-finite values", details={"path": str(path)})
    return Tensor4(payload.reshape(shape))


def save_dataset(dataset: Dataset, directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / DEFAULT_FILES["train"], dataset.train)
    write_tensor(directory / DEFAULT_FILES["test"], dataset.test)
    write_tensor(directory / DEFAULT_FILES["masks"], dataset.test_pixel_masks)
    labels = pd.DataFrame(
        {"sample_id": np.arange(dataset.test.batch, dtype=np.int64), "label": dataset.test_image_labels},
    )
    labels.to_csv(directory / DEFAULT_FILES["labels"], index=False)

    manifest: dict[str, Any] = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "files": dict(DEFAULT_FILES),
        "summary": dataset.summary(),
    }
    if dataset.spec is not None:
        manifest["synthetic_spec"] = dataset.spec.to_dict()
    manifest_path = directory / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    LOGGER.info("saved dataset to %s", directory)
    return manifest_path


def _read_manifest(path: Path) -> tuple[Path, dict[str, Any]]:
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    if not manifest_path.exists():
        raise FormatError(f"dataset manifest not found: {manifest_path}", details={"path": str(manifest_path)})
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"manifest {manifest_path} is not valid JSON: {exc}", details={"path": str(manifest_path)}) from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("files"), dict):
        raise FormatError("manifest must be an object with a 'files' mapping", details={"path": str(manifest_path)})
    if manifest.get("format", MANIFEST_FORMAT) != MANIFEST_FORMAT:
        raise FormatError(f"unexpected manifest format {manifest.get('format')!r}", details={"path": str(manifest_path)})
    return manifest_path.parent, manifest


def _read_labels(path: Path, expected: int) -> np.ndarray:
    if not path.exists():
        raise FormatError(f"labels file not found: {path}", details={"path": str(path)})
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"labels file {path.name} is not a readable CSV: {exc}", details={"path": str(path)}) from exc
    missing = {"sample_id", "label"}.difference(frame.columns)
    if missing:
        raise FormatError(f"labels file missing columns: {sorted(missing)}", details={"path": str(path)})
    frame = frame.sort_values("sample_id", kind="stable")
    if frame["sample_id"].tolist() != list(range(expected)):
        raise FormatError(
            f"labels must cover sample ids 0..{expected - 1} exactly once",
            details={"path": str(path), "rows": int(len(frame))},
        )
    labels = frame["label"].to_numpy()
    if not np.isin(labels, (0, 1)).all():
        raise FormatError("labels must be 0 or 1", details={"path": str(path)})
    return labels.astype(np.int64)


def load_features(path: Path) -> Dataset:
    root, manifest = _read_manifest(Path(path))
    files = manifest["files"]
    for role in ("train", "test", "labels"):
        if role not in files:
            raise FormatError(f"manifest does not name a {role} file", details={"role": role})
    if "masks" not in files or not (root / files["masks"]).exists():
        raise MissingMaskError("dataset has no pixel mask file", details={"root": str(root)})

    train = read_tensor(root / files["train"])
    test = read_tensor(root / files["test"])
    masks = read_tensor(root / files["masks"])
    labels = _read_labels(root / files["labels"], test.batch)
    spec = synthetic_spec_from_mapping(manifest["synthetic_spec"]) if "synthetic_spec" in manifest else None

    dataset = Dataset(train=train, test=test, test_image_labels=labels, test_pixel_masks=masks, spec=spec)
    LOGGER.info("loaded dataset from %s: %s", root, dataset.summary())
    return dataset
