"""Matrix persistence.

Binary container layout (all little-endian)::

    bytes 0..7    magic b"CDMATRX1"
    bytes 8..15   uint64 number of rows
    bytes 16..23  uint64 number of columns
    bytes 24..    rows*cols float64 values, row-major

CSV matrices are plain comma-separated values, one row per line, with an
optional header line of column names.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CDMATRX1"
_HEADER = struct.Struct("<8sQQ")


def write_matrix(path, a) -> None:
    a = np.ascontiguousarray(np.atleast_2d(np.asarray(a, dtype="<f8")))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, a.shape[0], a.shape[1]))
        fh.write(a.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != rows * cols * 8:
        raise ValueError(f"{path}: expected {rows}x{cols} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).copy()


def write_csv_matrix(path, a, header=None) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in a:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_csv_matrix(path, header: bool = False) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2))
