"""File formats and deterministic serialization.

Matrices travel as CSV (rows = observations, header optional) or as a raw
binary format: magic ``SPCT``, u32 n, u32 p, then n*p little-endian float64
in row-major order.  Vectors are single-column CSV or a JSON array.

Reports are serialized with sorted keys and every float printed in a fixed
17-significant-digit round-trip format, so identical inputs produce
byte-identical artifacts.
"""

from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "load_matrix",
    "save_matrix_csv",
    "save_matrix_spct",
    "load_vector",
    "save_vector_csv",
    "save_vector_json",
    "fmt_float",
    "dumps_json",
    "write_csv",
]

_MAGIC = b"SPCT"


def load_matrix(path) -> np.ndarray:
    """Load a matrix, sniffing SPCT binary vs CSV from the file content."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _MAGIC:
        return _load_spct(path)
    return _load_csv_matrix(path)


def _load_spct(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated SPCT header")
        n, p = struct.unpack("<II", header)
        data = np.frombuffer(fh.read(8 * n * p), dtype="<f8")
    if data.size != n * p:
        raise ValueError(f"{path}: truncated SPCT payload ({data.size} of {n * p} values)")
    return data.reshape(n, p).astype(np.float64)


def _load_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path, "r", newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh)):
            rec = [c.strip() for c in rec if c.strip() != ""]
            if not rec:
                continue
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                if lineno == 0:
                    continue  # header line
                raise ValueError(f"{path}: non-numeric row {lineno}") from None
    if not rows:
        raise ValueError(f"{path}: no numeric rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows with widths {sorted(widths)}")
    return np.asarray(rows, dtype=np.float64)


def save_matrix_csv(path, A) -> None:
    A = np.asarray(A, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in A:
            w.writerow([fmt_float(x) for x in row])


def save_matrix_spct(path, A) -> None:
    A = np.ascontiguousarray(A, dtype="<f8")
    n, p = A.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", n, p))
        fh.write(A.tobytes(order="C"))


def load_vector(path) -> np.ndarray:
    """Load a vector from a JSON array (.json) or single-column CSV."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path) as fh:
            data = json.load(fh)
        return np.asarray(data, dtype=np.float64).ravel()
    A = _load_csv_matrix(path)
    if A.shape[1] != 1:
        raise ValueError(f"{path}: expected a single column, got {A.shape[1]}")
    return A[:, 0]


def save_vector_csv(path, v) -> None:
    v = np.asarray(v, dtype=np.float64).ravel()
    with open(path, "w", newline="") as fh:
        for x in v:
            fh.write(fmt_float(x) + "\n")


def save_vector_json(path, v) -> None:
    v = np.asarray(v, dtype=np.float64).ravel()
    with open(path, "w") as fh:
        fh.write("[" + ", ".join(fmt_float(x) for x in v) + "]\n")


def fmt_float(x) -> str:
    """Round-trip decimal form of a float with up to 17 significant digits."""
    x = float(x)
    return format(x, ".17g")


def dumps_json(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, fixed float format, trailing newline."""
    buf = _io.StringIO()
    _emit(obj, buf, indent, 0)
    buf.write("\n")
    return buf.getvalue()


def _emit(obj, buf, indent, level):
    pad, pad_in = " " * (indent * level), " " * (indent * (level + 1))
    if obj is None or isinstance(obj, bool):
        buf.write(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        buf.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x != x or x in (float("inf"), float("-inf")):
            buf.write(json.dumps(str(x)))  # JSON has no non-finite literals
        else:
            buf.write(fmt_float(x))
    elif isinstance(obj, str):
        buf.write(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            buf.write("{}")
            return
        buf.write("{\n")
        keys = sorted(obj.keys())
        for i, k in enumerate(keys):
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be strings, got {type(k)}")
            buf.write(pad_in + json.dumps(k) + ": ")
            _emit(obj[k], buf, indent, level + 1)
            buf.write(",\n" if i + 1 < len(keys) else "\n")
        buf.write(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            buf.write("[]")
            return
        buf.write("[\n")
        for i, item in enumerate(seq):
            buf.write(pad_in)
            _emit(item, buf, indent, level + 1)
            buf.write(",\n" if i + 1 < len(seq) else "\n")
        buf.write(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj)}")


def write_csv(path, header, rows) -> None:
    """CSV with deterministic float formatting; rows are sequences."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_csv_cell(c) for c in row])


def _csv_cell(c):
    if isinstance(c, (bool, np.bool_)):
        return "true" if c else "false"
    if isinstance(c, (float, np.floating)):
        return fmt_float(c)
    if isinstance(c, (int, np.integer)):
        return str(int(c))
    return str(c)
