"""Dataset, model and coreset files.

Binary datasets: 8-byte magic ``VCGMM001``, two little-endian uint64 counts
``(N, D)``, then ``N*D`` little-endian float64 values in row-major order.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataFormatError
from .model import GmmParams, WeightedCoreset, check_data

MAGIC = b"VCGMM001"
_HEADER = struct.Struct("<8sQQ")


def _parse_row(row: list[str]) -> list[float] | None:
    try:
        return [float(cell) for cell in row]
    except ValueError:
        return None


def load_csv(path) -> np.ndarray:
    """Comma-separated numeric rows; a first row with no numeric cell is a header."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{path}: file contains no data rows")
    line, first = rows[0]
    if all(_parse_row([c]) is None for c in first):
        rows = rows[1:]
        if not rows:
            raise DataFormatError(f"{path}: header row but no data rows")
    width = len(rows[0][1])
    values = np.empty((len(rows), width))
    for i, (line, row) in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(
                f"{path}: line {line} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {line}, column {j + 1}: non-numeric value {cell!r}") from None
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        i, j = bad[0]
        raise DataFormatError(
            f"{path}: line {rows[i][0]}, column {j + 1}: non-finite value {values[i, j]}")
    return values


def save_csv(data, path, header: list[str] | None = None) -> None:
    data = np.asarray(data, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        if header:
            out.writerow(header)
        for row in data:
            out.writerow([repr(float(v)) for v in row])


def load_binary(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError(
            f"{path}: header needs {_HEADER.size} bytes, file has {len(raw)}")
    magic, n, d = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r} at byte offset 0, expected {MAGIC!r}")
    if n < 1 or d < 1:
        raise DataFormatError(f"{path}: invalid shape ({n}, {d}) at byte offset 8")
    expected = _HEADER.size + 8 * n * d
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: expected {expected} bytes for a {n}x{d} payload, got {len(raw)} "
            f"(payload starts at byte offset {_HEADER.size})")
    values = np.frombuffer(raw, dtype="<f8", count=n * d, offset=_HEADER.size)
    values = values.astype(np.float64).reshape(n, d)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        i, j = bad[0]
        offset = _HEADER.size + 8 * (i * d + j)
        raise DataFormatError(
            f"{path}: non-finite value at row {i}, column {j} (byte offset {offset})")
    return values


def save_binary(data, path) -> None:
    data = check_data(data)
    n, d = data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, d))
        fh.write(data.astype("<f8").tobytes(order="C"))


def detect_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".csv", ".txt"):
        return "csv"
    if suffix in (".bin", ".vcgmm"):
        return "binary"
    with open(path, "rb") as fh:
        return "binary" if fh.read(8) == MAGIC else "csv"


def load_dataset(path, fmt: str | None = None) -> np.ndarray:
    if path is None:
        raise DataFormatError("no dataset path given")
    if not Path(path).is_file():
        raise DataFormatError(f"{path}: no such file")
    fmt = fmt or detect_format(path)
    if fmt == "csv":
        data = load_csv(path)
    elif fmt == "binary":
        data = load_binary(path)
    else:
        raise DataFormatError(f"unknown dataset format {fmt!r}")
    try:
        return check_data(data)
    except ContractViolation as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def save_model(params: GmmParams, path, extra: dict | None = None) -> None:
    rec = {"means": params.means.tolist(), "variance": params.variance}
    if extra:
        rec.update(extra)
    Path(path).write_text(json.dumps(rec))


def load_model(path) -> GmmParams:
    try:
        rec = json.loads(Path(path).read_text())
        return GmmParams(np.asarray(rec["means"], dtype=np.float64), rec.get("variance", 1.0))
    except (OSError, KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: not a model file ({exc})") from None


def save_coreset(coreset: WeightedCoreset, path) -> None:
    """CSV with columns ``index, weight, x0 .. x{D-1}``."""
    idx = coreset.indices if coreset.indices is not None else np.full(coreset.n_core, -1)
    header = ["index", "weight"] + [f"x{j}" for j in range(coreset.dim)]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for i, w, row in zip(idx, coreset.weights, coreset.points):
            out.writerow([int(i), repr(float(w))] + [repr(float(v)) for v in row])


def load_coreset(path) -> WeightedCoreset:
    table = load_csv(path)
    if table.shape[1] < 3:
        raise DataFormatError(f"{path}: coreset file needs index, weight and coordinates")
    return WeightedCoreset(points=table[:, 2:], weights=table[:, 1],
                           indices=table[:, 0].astype(np.int64))
