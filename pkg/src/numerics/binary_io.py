# This module reads and writes the binary container shared by feature tensors and model checkpoints.
# Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header, raw little-endian float64 payload.
# Payloads are written bit-exactly so a save/load round trip reproduces identical arrays.

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from src.common.errors import FormatError

MAGIC_LENGTH = 8
_LENGTH_PREFIX = struct.Struct("<Q")
PAYLOAD_DTYPE = np.dtype("<f8")


def write_blob(path: Path, *, magic: bytes, header: dict[str, Any], payload: np.ndarray) -> Path:
    if len(magic) != MAGIC_LENGTH:
        raise ValueError(f"magic must be {MAGIC_LENGTH} bytes, got {len(magic)}")
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(payload, dtype=PAYLOAD_DTYPE).tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(magic)
        handle.write(_LENGTH_PREFIX.pack(len(header_bytes)))
        handle.write(header_bytes)
        handle.write(body)
    return path


def read_blob(path: Path, *, magic: bytes) -> tuple[dict[str, Any], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"file not found: {path}", details={"path": str(path)})
    raw = path.read_bytes()

    if raw[:MAGIC_LENGTH] != magic:
        raise FormatError(
            f"bad magic in {path.name}",
            details={"path": str(path), "expected": magic.decode("ascii", "replace")},
        )
    prefix_end = MAGIC_LENGTH + _LENGTH_PREFIX.size
    if len(raw) < prefix_end:
        raise FormatError(f"truncated header in {path.name}", details={"path": str(path)})
    (header_length,) = _LENGTH_PREFIX.unpack(raw[MAGIC_LENGTH:prefix_end])
    header_end = prefix_end + header_length
    if len(raw) < header_end:
        raise FormatError(f"truncated header in {path.name}", details={"path": str(path)})

    try:
        header = json.loads(raw[prefix_end:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header in {path.name}: {exc}", details={"path": str(path)}) from exc
    if not isinstance(header, dict):
        raise FormatError(f"header in {path.name} must be a JSON object", details={"path": str(path)})

    body = raw[header_end:]
    if len(body) % PAYLOAD_DTYPE.itemsize != 0:
        raise FormatError(
            f"payload of {path.name} is not a whole number of float64 values",
            details={"path": str(path), "payload_bytes": len(body)},
        )
    payload = np.frombuffer(body, dtype=PAYLOAD_DTYPE).astype(np.float64)
    return header, payload
