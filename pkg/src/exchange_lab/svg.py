"""Deterministic SVG heatmaps of grid fields with node hatching and path overlays.

Output depends only on the input arrays: coordinates and colours are
formatted with fixed precision and no timestamps or random ids are emitted.
"""
from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .configspace import ConfigGrid
from .paths import PathPolyline

CELL = 6  # pixels per grid cell
MARGIN = 30

_VIRIDIS = np.array(
    [
        [68, 1, 84],
        [72, 40, 120],
        [62, 74, 137],
        [49, 104, 142],
        [38, 130, 142],
        [31, 158, 137],
        [53, 183, 121],
        [109, 205, 89],
        [180, 222, 44],
        [253, 231, 37],
    ],
    dtype=float,
)


class SliceError(ValueError):
    """The requested 2D slice does not exist on this grid."""


@dataclass(frozen=True)
class SliceSpec:
    """Two displayed configuration axes; all other axes fixed at grid indices."""

    axes: tuple[int, int] = (0, 1)
    fixed: tuple[tuple[int, int], ...] = ()

    def take(self, arr: np.ndarray) -> np.ndarray:
        D = arr.ndim
        a, b = self.axes
        if a == b or not (0 <= a < D and 0 <= b < D):
            raise SliceError(f"display axes {self.axes} invalid for a {D}-axis field")
        fixed = dict(self.fixed)
        idx = []
        for k in range(D):
            if k in (a, b):
                idx.append(slice(None))
                continue
            i = fixed.get(k, arr.shape[k] // 2)
            if not 0 <= i < arr.shape[k]:
                raise SliceError(f"index {i} out of range on axis {k}")
            idx.append(i)
        out = arr[tuple(idx)]
        return out if a < b else out.T


def _hex(rgb) -> str:
    r, g, b = (int(round(min(max(c, 0.0), 255.0))) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def magnitude_color(u: float) -> str:
    """Viridis-like map for ``u`` in [0, 1]."""
    x = min(max(u, 0.0), 1.0) * (len(_VIRIDIS) - 1)
    k = min(int(x), len(_VIRIDIS) - 2)
    f = x - k
    return _hex((1 - f) * _VIRIDIS[k] + f * _VIRIDIS[k + 1])


def phase_color(phi: float) -> str:
    """Cyclic hue for a phase in radians."""
    h = (phi / (2 * np.pi)) % 1.0
    return _hex(255 * np.array(colorsys.hsv_to_rgb(h, 0.85, 0.95)))


def render_heatmap(
    values: np.ndarray,
    grid: ConfigGrid,
    style: str = "magnitude",
    slice_spec: SliceSpec | None = None,
    paths: Sequence[tuple[PathPolyline, str]] = (),
    node_rel: float = 1e-3,
    title: str = "",
) -> str:
    """SVG text for ``|values|^2`` (``magnitude``) or ``arg(values)`` (``phase``).

    Cells with ``|values| < node_rel * max|values|`` are hatched. ``paths``
    pairs a polyline with ``"solid"`` or ``"dotted"``; the polyline is drawn
    in the two displayed axes.
    """
    if style not in ("magnitude", "phase"):
        raise ValueError("style must be 'magnitude' or 'phase'")
    arr = np.asarray(values)
    if arr.shape != grid.shape:
        raise SliceError(f"field shape {arr.shape} does not match grid {grid.shape}")
    spec = slice_spec or SliceSpec()
    if grid.D == 1:
        arr = arr[:, None]
        plane = arr
        ax_a, ax_b = 0, None
    else:
        plane = spec.take(arr)
        ax_a, ax_b = spec.axes
    nx, ny = plane.shape
    mag = np.abs(plane)
    peak = float(mag.max())
    width = nx * CELL + 2 * MARGIN
    height = ny * CELL + 2 * MARGIN
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        "<defs><pattern id=\"hatch\" width=\"4\" height=\"4\" patternUnits=\"userSpaceOnUse\">"
        "<path d=\"M0,4 L4,0\" stroke=\"#000000\" stroke-width=\"0.8\"/></pattern></defs>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{MARGIN}" y="{MARGIN - 10}" font-size="12" font-family="monospace">{_escape(title)}</text>')
    dens = mag**2
    dmax = float(dens.max()) if peak > 0 else 1.0
    for i in range(nx):
        for j in range(ny):
            if style == "magnitude":
                c = magnitude_color(dens[i, j] / dmax if dmax > 0 else 0.0)
            else:
                c = phase_color(float(np.angle(plane[i, j])))
            x, y = _cell_xy(i, j, ny)
            out.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{c}"/>')
    if peak > 0:
        for i, j in zip(*np.nonzero(mag < node_rel * peak)):
            x, y = _cell_xy(int(i), int(j), ny)
            out.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="url(#hatch)"/>')
    if ax_b is not None:
        for poly, dash in paths:
            out.append(_polyline(poly, grid, ax_a, ax_b, nx, ny, dash))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _cell_xy(i, j, ny):
    # first axis to the right, second axis upwards
    return MARGIN + i * CELL, MARGIN + (ny - 1 - j) * CELL


def _polyline(poly: PathPolyline, grid: ConfigGrid, a: int, b: int, nx: int, ny: int, dash: str) -> str:
    axa, axb = grid.axes[a], grid.axes[b]
    ha, hb = axa[1] - axa[0], axb[1] - axb[0]
    pts = []
    for p in poly.points:
        u = (p[a] - axa[0]) / ha
        v = (p[b] - axb[0]) / hb
        x = MARGIN + (u + 0.5) * CELL
        y = MARGIN + (ny - 0.5 - v) * CELL
        pts.append(f"{x:.2f},{y:.2f}")
    style = ' stroke-dasharray="3,3"' if dash == "dotted" else ""
    return f'<polyline points="{" ".join(pts)}" fill="none" stroke="#000000" stroke-width="1.5"{style}/>'


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text)
    return path


def svg_digest(text: str) -> str:
    """SHA-256 of the canonical SVG text, for regression comparison."""
    return hashlib.sha256(text.encode()).hexdigest()
