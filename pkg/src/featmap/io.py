"""Dataset ingestion and result persistence.

Binary matrices use the ``f32bin`` layout: the magic bytes ``FMAP``, a
little-endian u32 version (1), u64 row count, u64 column count, then the
row-major payload as little-endian float32.
"""

import csv
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError

F32BIN_MAGIC = b"FMAP"
F32BIN_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
FORMATS = ("csv", "f32bin")


@dataclass
class Dataset:
    values: np.ndarray
    labels: np.ndarray | None = None
    feature_names: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"dataset must be a 2-D matrix, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            r, c = np.argwhere(~np.isfinite(self.values))[0]
            raise DataError(f"non-finite value at row {r}, column {c}")
        if self.labels is not None and len(self.labels) != self.m:
            raise DataError(f"{len(self.labels)} labels for {self.m} rows")
        if self.feature_names is not None and len(self.feature_names) != self.n:
            raise DataError(f"{len(self.feature_names)} feature names for {self.n} columns")

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _coerce_labels(raw):
    try:
        return np.array([int(v) for v in raw], dtype=np.int64)
    except ValueError:
        pass
    try:
        as_float = np.array([float(v) for v in raw])
        if np.all(as_float == np.round(as_float)):
            return as_float.astype(np.int64)
    except ValueError:
        pass
    return np.array(raw)


def read_csv(path, label_column=None):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no data rows")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
    else:
        first_line = 1
    if not rows:
        raise DataError(f"{path}: header but no data rows")
    width = len(header) if header else len(rows[0])

    label_idx = None
    if label_column is not None:
        if header and label_column in header:
            label_idx = header.index(label_column)
        elif str(label_column).lstrip("-").isdigit():
            label_idx = int(label_column) % width
        else:
            raise DataError(f"{path}: label column {label_column!r} not found")

    values, labels = [], []
    for lineno, row in enumerate(rows, start=first_line):
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, found {len(row)}")
        if label_idx is not None:
            labels.append(row[label_idx].strip())
            row = row[:label_idx] + row[label_idx + 1:]
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if not all(np.isfinite(vals)):
            raise DataError(f"{path}:{lineno}: non-finite value")
        values.append(vals)
    names = None
    if header:
        names = header[:label_idx] + header[label_idx + 1:] if label_idx is not None else header
    return Dataset(np.array(values, dtype=np.float64),
                   _coerce_labels(labels) if label_idx is not None else None, names)


def read_f32bin(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, version, m, n = _HEADER.unpack(head)
        if magic != F32BIN_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != F32BIN_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        payload = np.frombuffer(fh.read(), dtype="<f4")
    if payload.size != m * n:
        raise DataError(f"{path}: header says {m}x{n} but payload holds {payload.size} values")
    x = payload.reshape(m, n).astype(np.float64)
    if not np.all(np.isfinite(x)):
        r, c = np.argwhere(~np.isfinite(x))[0]
        raise DataError(f"{path}: non-finite value at row {r}, column {c}")
    return x


def write_f32bin(path, x):
    x = np.ascontiguousarray(x, dtype="<f4")
    if x.ndim != 2:
        raise DataError("f32bin stores 2-D matrices only")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(F32BIN_MAGIC, F32BIN_VERSION, x.shape[0], x.shape[1]))
        fh.write(x.tobytes())


def load_matrix(path, format="csv", label_column=None):
    """Read a dataset from CSV (optional header, optional label column) or f32bin."""
    if not os.path.exists(path):
        raise DataError(f"{path}: no such file")
    if format == "csv":
        return read_csv(path, label_column)
    if format == "f32bin":
        if label_column is not None:
            raise ParameterError("f32bin files carry no label column")
        return Dataset(read_f32bin(path))
    raise ParameterError(f"unknown format {format!r}; choose from {FORMATS}")


# ---------------------------------------------------------------- outputs

def _fmt(v):
    return f"{v:.9g}"


def _round9(obj):
    """Recursively round floats to 9 significant digits for JSON output."""
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round9(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(_fmt(float(obj)))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_embedding(result, directory):
    """Write embedding.csv, frames.json, importance.csv and diagnostics.json."""
    try:
        os.makedirs(directory, exist_ok=True)
        y = result.embedding
        header = [f"y{i + 1}" for i in range(y.shape[1])]
        labels = result.labels
        rows = [[_fmt(v) for v in row] for row in y]
        if labels is not None:
            header.append("label")
            rows = [r + [str(lab)] for r, lab in zip(rows, labels)]
        _write_table(os.path.join(directory, "embedding.csv"), header, rows)

        frames = {
            "dim": int(result.frames.dim),
            "frames": result.frames.frames,
            "singular_values": result.frames.singular_values,
        }
        with open(os.path.join(directory, "frames.json"), "w", encoding="utf-8") as fh:
            json.dump(_round9(frames), fh)

        write_importance(os.path.join(directory, "importance.csv"), result.importance, result.feature_names)

        diag = {k: v for k, v in result.diagnostics.items() if k not in ("r_o", "r_e")}
        with open(os.path.join(directory, "diagnostics.json"), "w", encoding="utf-8") as fh:
            json.dump(_round9(diag), fh, indent=1)
    except OSError as exc:
        raise DataError(f"cannot write results to {exc.filename or directory}: {exc.strerror}") from exc


def write_importance(path, importance, feature_names=None):
    n = importance.shape[1]
    names = list(feature_names) if feature_names is not None else [f"f{h + 1}" for h in range(n)]
    _write_table(path, names, [[_fmt(v) for v in row] for row in importance])


def read_embedding(path):
    """``(Y, labels)`` from an embedding.csv written by :func:`write_embedding`."""
    if os.path.isdir(path):
        path = os.path.join(path, "embedding.csv")
    ds = read_csv(path, label_column="label" if _has_label(path) else None)
    return ds.values, ds.labels


def _has_label(path):
    with open(path, encoding="utf-8") as fh:
        return "label" in fh.readline().strip().split(",")


def read_frames(path):
    """``(frames, singular_values)`` arrays from frames.json."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return np.array(doc["frames"], dtype=np.float64), np.array(doc["singular_values"], dtype=np.float64)


def read_importance(path):
    ds = read_csv(path)
    return ds.values, ds.feature_names


def read_diagnostics(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
