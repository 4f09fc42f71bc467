"""File formats: TB3 tensors, dataset directories, traces, CV tables, PGM images.

TB3 layout: the 4-byte magic ``TB31``, three little-endian uint64 dims
``d1 d2 d3``, then ``d1*d2*d3`` little-endian float64 values. Values are
slice-major: the frontal index varies slowest, then the row, then the column.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from io import StringIO
from pathlib import Path

import numpy as np

from .errors import ParseError, TensorFormatError
from .loss import Dataset
from .tensor import as_tensor3

MAGIC = b"TB31"
_HEADER = struct.Struct("<4sQQQ")


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def tb3_bytes(A) -> bytes:
    A = as_tensor3(A)
    d1, d2, d3 = A.shape
    body = np.ascontiguousarray(A.transpose(2, 0, 1), dtype="<f8").tobytes()
    return _HEADER.pack(MAGIC, d1, d2, d3) + body


def write_tb3(path, A) -> None:
    _atomic_write(Path(path), tb3_bytes(A))


def parse_tb3(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise TensorFormatError("truncated TB3 header")
    magic, d1, d2, d3 = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise TensorFormatError(f"bad TB3 magic {magic!r}")
    if min(d1, d2, d3) < 1:
        raise TensorFormatError(f"TB3 dims must be positive, got {(d1, d2, d3)}")
    count = d1 * d2 * d3
    if len(buf) != _HEADER.size + 8 * count:
        raise TensorFormatError(f"TB3 payload has {len(buf) - _HEADER.size} bytes, expected {8 * count}")
    flat = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size, count=count)
    return np.ascontiguousarray(flat.reshape(d3, d1, d2).transpose(1, 2, 0), dtype=float)


def read_tb3(path) -> np.ndarray:
    return parse_tb3(Path(path).read_bytes())


def read_matrix_csv(path) -> np.ndarray:
    """Numeric CSV matrix as a tensor with a single frontal slice."""
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return as_tensor3(M)


# datasets -----------------------------------------------------------------


def write_dataset(directory, data: Dataset, layout: str = "stacked", extra: dict | None = None) -> None:
    """Write ``X.tb3`` (or ``X_00000.tb3``...), ``y.csv`` and ``manifest.json``.

    The stacked layout puts sample ``i`` in frontal slices ``i*d3 .. i*d3+d3-1``
    of one d1 x d2 x (d3*n) tensor.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = data.n
    d1, d2, d3 = data.dims
    if layout == "stacked":
        stacked = data.X.transpose(1, 2, 0, 3).reshape(d1, d2, n * d3)
        write_tb3(directory / "X.tb3", stacked)
        files = ["X.tb3"]
    elif layout == "per-sample":
        width = max(5, len(str(n - 1)))
        files = [f"X_{i:0{width}d}.tb3" for i in range(n)]
        for name, Xi in zip(files, data.X):
            write_tb3(directory / name, Xi)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    _atomic_write(directory / "y.csv", "".join(f"{v!r}\n" for v in data.y.tolist()).encode())
    manifest = {"format": "tubalreg-dataset", "version": 1, "layout": layout, "n": n, "dims": [d1, d2, d3], "files": files}
    if extra:
        manifest.update(extra)
    write_json(directory / "manifest.json", manifest)


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    try:
        n = int(manifest["n"])
        d1, d2, d3 = (int(v) for v in manifest["dims"])
        layout = manifest["layout"]
        files = manifest["files"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed manifest in {directory}: {exc}") from exc
    if layout == "stacked":
        T = read_tb3(directory / files[0])
        if T.shape != (d1, d2, d3 * n):
            raise TensorFormatError(f"stacked X has shape {T.shape}, manifest says {(d1, d2, d3 * n)}")
        X = T.reshape(d1, d2, n, d3).transpose(2, 0, 1, 3)
    elif layout == "per-sample":
        if len(files) != n:
            raise ParseError(f"manifest lists {len(files)} files for n={n}")
        X = np.stack([read_tb3(directory / f) for f in files])
    else:
        raise ParseError(f"unknown layout {layout!r}")
    try:
        y = np.loadtxt(directory / "y.csv", delimiter=",", ndmin=1)
    except ValueError as exc:
        raise ParseError(f"y.csv: {exc}") from exc
    return Dataset(np.ascontiguousarray(X), y)


def write_json(path, obj) -> None:
    _atomic_write(Path(path), (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


# tables -------------------------------------------------------------------

TRACE_COLUMNS = ("iter", "objective", "eta", "increment_norm", "backtracks")
CV_COLUMNS = ("lambda", "robustification", "fold", "criterion", "mean_criterion", "selected")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, columns, rows) -> None:
    buf = StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(c) for c in columns]
        w.writerow([_fmt(v) for v in row])
    _atomic_write(Path(path), buf.getvalue().encode())


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_trace(path, trace) -> None:
    write_rows(path, TRACE_COLUMNS, [tuple(r) for r in trace])


def read_trace(path) -> dict[str, np.ndarray]:
    """Trace columns as float arrays; raises ParseError on malformed files."""
    rows = read_rows(path)
    if not rows:
        raise ParseError(f"{path}: empty trace")
    missing = [c for c in ("iter", "objective") if c not in rows[0]]
    if missing:
        raise ParseError(f"{path}: missing columns {missing}")
    out = {}
    for c in TRACE_COLUMNS:
        if c not in rows[0]:
            continue
        try:
            out[c] = np.array([float(r[c]) if r[c] != "" else math.nan for r in rows])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad value in column {c}: {exc}") from exc
    return out


def write_pgm(path, B) -> None:
    """Frontal-slice mean of ``B`` as an 8-bit binary PGM, min-max scaled."""
    M = as_tensor3(B).mean(axis=2)
    lo, hi = float(M.min()), float(M.max())
    scaled = np.zeros_like(M) if hi == lo else (M - lo) / (hi - lo)
    pix = np.rint(255 * scaled).astype(np.uint8)
    h, w = pix.shape
    _atomic_write(Path(path), f"P5\n{w} {h}\n255\n".encode() + pix.tobytes())
