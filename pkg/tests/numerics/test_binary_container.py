"""
Tests for the binary container shared by feature tensors and checkpoints.
It asserts expected behavior and guards against regressions in the corresponding component.
These tests are executed by `pytest` locally and in CI and should remain deterministic.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from src.common.errors import FormatError
from src.numerics.binary_io import read_blob, write_blob

MAGIC = b"TESTBLOB"


def test_payload_is_reproduced_bit_exactly(tmp_path: Path) -> None:
    payload = np.array([0.1, -2.5e-300, 1.0 / 3.0, 7.0])
    path = write_blob(tmp_path / "blob.bin", magic=MAGIC, header={"k": 1}, payload=payload)

    header, loaded = read_blob(path, magic=MAGIC)

    assert header == {"k": 1}
    assert loaded.tobytes() == payload.astype("<f8").tobytes()


def test_bad_magic_is_rejected(tmp_path: Path) -> None:
    path = write_blob(tmp_path / "blob.bin", magic=MAGIC, header={}, payload=np.zeros(2))
    with pytest.raises(FormatError, match="bad magic"):
        read_blob(path, magic=b"OTHERMAG")


def test_truncated_payload_is_rejected(tmp_path: Path) -> None:
    path = write_blob(tmp_path / "blob.bin", magic=MAGIC, header={}, payload=np.zeros(2))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError, match="whole number"):
        read_blob(path, magic=MAGIC)


def test_truncated_header_is_rejected(tmp_path: Path) -> None:
    path = write_blob(tmp_path / "blob.bin", magic=MAGIC, header={"long": "x" * 50}, payload=np.zeros(1))
    path.write_bytes(path.read_bytes()[:30])
    with pytest.raises(FormatError, match="truncated header"):
        read_blob(path, magic=MAGIC)


def test_missing_file_is_a_format_error(tmp_path: Path) -> None:
    with pytest.raises(FormatError, match="not found"):
        read_blob(tmp_path / "absent.bin", magic=MAGIC)
