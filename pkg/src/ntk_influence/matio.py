"""Binary and CSV serialization for matrices and tabular results.

Binary matrix layout: two little-endian uint64 header words (rows, cols)
followed by rows*cols little-endian float64 values in row-major order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataFormatError

_HEADER = struct.Struct("<QQ")


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips a float64 exactly."""
    return repr(float(x))


def write_matrix(path: str | Path, values: np.ndarray) -> None:
    """Write a 2-d float array in the binary matrix format."""
    a = np.ascontiguousarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise DataFormatError(f"expected a 2-d array, got ndim={a.ndim}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(a.shape[0], a.shape[1]))
        fh.write(a.astype("<f8", copy=False).tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a matrix written by write_matrix, validating the header and length."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError("file shorter than the 16-byte header", offset=len(raw))
    rows, cols = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise DataFormatError(
            f"expected {expected} bytes for a {rows}x{cols} matrix, found {len(raw)}",
            offset=min(len(raw), expected),
        )
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return data.reshape(rows, cols).copy()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write rows to CSV with deterministic float formatting (exact round-trip)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def read_csv_columns(path: str | Path) -> dict[str, list[str]]:
    """Read a CSV written by write_csv back into per-column string lists."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {name: [] for name in header}
        for row in reader:
            for name, value in zip(header, row):
                cols[name].append(value)
    return cols
