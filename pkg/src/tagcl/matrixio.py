"""Binary matrix and checkpoint files.

Matrix format: magic "LGX1", two little-endian u64 (rows, cols), then
row-major float64 little-endian payload. Checkpoints are "LGXP" followed
by the stack's tensors as consecutive LGX1 blocks, with a JSON sidecar
(<path>.json) naming each tensor and recording the stack layout.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MATRIX_MAGIC = b"LGX1"
CHECKPOINT_MAGIC = b"LGXP"
_HEADER = struct.Struct("<QQ")


def write_matrix(matrix: np.ndarray, path) -> None:
    matrix = np.ascontiguousarray(np.asarray(matrix, dtype=np.float64))
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    with Path(path).open("wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(_HEADER.pack(matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.astype("<f8").tobytes(order="C"))


def _read_matrix_from(fh) -> np.ndarray:
    magic = fh.read(4)
    if magic != MATRIX_MAGIC:
        raise ValueError(f"bad matrix magic {magic!r}")
    rows, cols = _HEADER.unpack(fh.read(_HEADER.size))
    payload = fh.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise ValueError("matrix payload truncated")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


def read_matrix(path) -> np.ndarray:
    with Path(path).open("rb") as fh:
        matrix = _read_matrix_from(fh)
        if fh.read(1):
            raise ValueError("trailing bytes after matrix payload")
    return matrix


def write_checkpoint(tensors: dict[str, np.ndarray], meta: dict, path) -> None:
    """Write named tensors in a fixed order plus a JSON sidecar."""
    path = Path(path)
    names = list(tensors)
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        for name in names:
            arr = np.asarray(tensors[name], dtype=np.float64)
            arr2d = arr.reshape(1, -1) if arr.ndim == 1 else arr
            fh.write(MATRIX_MAGIC)
            fh.write(_HEADER.pack(arr2d.shape[0], arr2d.shape[1]))
            fh.write(np.ascontiguousarray(arr2d).astype("<f8").tobytes(order="C"))
    sidecar = {
        "tensors": [
            {"name": name, "shape": list(np.asarray(tensors[name]).shape)}
            for name in names
        ],
        "meta": meta,
    }
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True), encoding="utf-8"
    )


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    tensors: dict[str, np.ndarray] = {}
    with path.open("rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        for entry in sidecar["tensors"]:
            arr = _read_matrix_from(fh)
            shape = tuple(entry["shape"])
            tensors[entry["name"]] = arr.reshape(shape)
        if fh.read(1):
            raise ValueError("trailing bytes after checkpoint payload")
    return tensors, sidecar["meta"]
