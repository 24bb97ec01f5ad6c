"""Artifact formats: the ``.wf`` grid container, CSV tables, JSON and JSON-lines.

A ``.wf`` file is the magic line ``EXWF 1``, one line of JSON metadata
(``grid`` plus free-form keys such as ``kind``, ``branch`` or
``component``), then little-endian float64 ``(re, im)`` pairs in row-major
grid order. All writers are deterministic: same input, same bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .configspace import ConfigGrid
from .wavefield import WaveField

MAGIC = b"EXWF 1\n"


class FormatError(ValueError):
    """A file does not follow the expected artifact layout."""


def write_wf(path, grid: ConfigGrid, values: np.ndarray, **meta) -> Path:
    """Write a complex (or real) grid array with header metadata."""
    path = Path(path)
    arr = np.asarray(values)
    if arr.shape != grid.shape:
        raise FormatError(f"array shape {arr.shape} does not match grid {grid.shape}")
    header = {"grid": grid.to_dict(), "shape": list(grid.shape), **meta}
    data = np.ascontiguousarray(arr, dtype=np.complex128).astype("<c16", copy=False)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(data.tobytes(order="C"))
    return path


def write_wavefield(path, psi: WaveField, **meta) -> Path:
    return write_wf(path, psi.grid, psi.amplitudes, kind="wavefield", **meta)


def read_wf(path) -> tuple[ConfigGrid, np.ndarray, dict]:
    """Return ``(grid, complex array, header)``."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise FormatError(f"{path}: not a .wf container")
    end = raw.index(b"\n", len(MAGIC))
    try:
        header = json.loads(raw[len(MAGIC) : end])
        grid = ConfigGrid.from_dict(header["grid"])
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: bad header ({exc})") from exc
    body = raw[end + 1 :]
    expected = grid.size * 16
    if len(body) != expected:
        raise FormatError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    arr = np.frombuffer(body, dtype="<c16").astype(np.complex128).reshape(grid.shape)
    return grid, arr, header


def read_wavefield(path) -> WaveField:
    grid, arr, _ = read_wf(path)
    return WaveField(grid, arr)


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays become Python values, non-finite floats strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.complexfloating, complex)):
        return [_clean(obj.real), _clean(obj.imag)]
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return _clean(obj.value)
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(to_json(obj) + "\n")
    return path


def write_jsonl(path, records: Iterable[dict]) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for r in records:
            fh.write(json.dumps(_clean(r), sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
