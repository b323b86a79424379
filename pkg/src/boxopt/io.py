"""Matrix file formats: binary DMAT1 and headerless CSV.

DMAT1 layout: the 4 magic bytes ``DMAT``, then ``rows`` and ``cols`` as
little-endian u64, then ``rows * cols`` little-endian f64 values in row-major
order. Vectors are stored as 1-column matrices.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DMAT"
_HEADER = struct.Struct("<4sQQ")


class FormatError(ValueError):
    pass


def write_dmat(path, a) -> None:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise FormatError(f"can only store 1-D or 2-D arrays, got shape {a.shape}")
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_dmat(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=rows * cols)
    return data.astype(np.float64).reshape(rows, cols)


def write_csv(path, a) -> None:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    np.savetxt(path, a, delimiter=",", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    try:
        a = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return a


def read_matrix(path) -> np.ndarray:
    """Read a DMAT1 or CSV file, chosen by extension (``.csv`` or anything else)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv(path)
    return read_dmat(path)


def write_matrix(path, a) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        write_csv(path, a)
    else:
        write_dmat(path, a)


def load_manifest(path) -> dict[str, np.ndarray | float]:
    """Load parameter bindings from a JSON manifest.

    Values are file paths (resolved relative to the manifest) or plain
    numbers for scalar parameters.
    """
    path = Path(path)
    entries = json.loads(path.read_text())
    if not isinstance(entries, dict):
        raise FormatError(f"{path}: manifest must be a JSON object")
    out: dict[str, np.ndarray | float] = {}
    for name, value in entries.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            out[name] = float(value)
        elif isinstance(value, str):
            out[name] = read_matrix(path.parent / value)
        else:
            raise FormatError(f"{path}: entry {name!r} must be a path or a number")
    return out


def save_manifest(path, arrays: dict[str, np.ndarray | float], fmt: str = "dmat") -> None:
    """Write each array next to ``path`` and a manifest referencing them."""
    path = Path(path)
    entries: dict[str, str | float] = {}
    for name, value in arrays.items():
        if np.ndim(value) == 0:
            entries[name] = float(value)
            continue
        fname = f"{name}.{fmt}"
        write_matrix(path.parent / fname, value)
        entries[name] = fname
    path.write_text(json.dumps(entries, indent=2))
