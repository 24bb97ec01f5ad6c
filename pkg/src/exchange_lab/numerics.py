"""Finite-difference stencils, grid interpolation and spectral derivatives."""
from __future__ import annotations


import numpy as np


def d1(f: np.ndarray, axis: int, h: float, periodic: bool = True) -> np.ndarray:
    """Fourth-order central first derivative.

    Non-periodic arrays get NaN in the two outermost layers along ``axis``.
    """
    r = lambda s: np.roll(f, -s, axis=axis)
    out = (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * h)
    if not periodic:
        out = _nan_edges(out, axis, 2)
    return out


def d2(f: np.ndarray, axis: int, h: float, periodic: bool = True) -> np.ndarray:
    """Fourth-order central second derivative."""
    r = lambda s: np.roll(f, -s, axis=axis)
    out = (-r(2) + 16 * r(1) - 30 * f + 16 * r(-1) - r(-2)) / (12 * h * h)
    if not periodic:
        out = _nan_edges(out, axis, 2)
    return out


def _nan_edges(a: np.ndarray, axis: int, width: int) -> np.ndarray:
    a = np.array(a, dtype=np.result_type(a.dtype, float))
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(0, width)
    a[tuple(sl)] = np.nan
    sl[axis] = slice(-width, None)
    a[tuple(sl)] = np.nan
    return a


def wavenumbers(n: int, h: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(n, d=h)


def spectral_d(f: np.ndarray, axis: int, h: float, order: int = 1) -> np.ndarray:
    k = wavenumbers(f.shape[axis], h)
    shape = [1] * f.ndim
    shape[axis] = -1
    fk = np.fft.fft(f, axis=axis) * ((1j * k) ** order).reshape(shape)
    out = np.fft.ifft(fk, axis=axis)
    return out if np.iscomplexobj(f) else out.real


def _lagrange4(t: np.ndarray) -> np.ndarray:
    """Weights for nodes -1, 0, 1, 2 at offset ``t`` in [0, 1)."""
    return np.stack(
        [
            -t * (t - 1) * (t - 2) / 6,
            (t + 1) * (t - 1) * (t - 2) / 2,
            -(t + 1) * t * (t - 2) / 2,
            (t + 1) * t * (t - 1) / 6,
        ]
    )


def _lagrange(t: np.ndarray, offsets) -> np.ndarray:
    """Lagrange weights for integer nodes ``offsets`` at fractional positions ``t``."""
    out = []
    for j in offsets:
        w = np.ones_like(t)
        for k in offsets:
            if k != j:
                w = w * (t - k) / (j - k)
        out.append(w)
    return np.stack(out)


def _locate(points, axes, periodic):
    """Per-axis base indices and fractional offsets; out-of-range flags."""
    base, frac = [], []
    bad = np.zeros(points.shape[0], dtype=bool)
    for a, ax in enumerate(axes):
        h = ax[1] - ax[0]
        u = (points[:, a] - ax[0]) / h
        i = np.floor(u)
        frac.append(u - i)
        base.append(i.astype(np.int64))
        if not periodic:
            bad |= (u < 0) | (u > len(ax) - 1)
    return base, frac, bad


def interpolate(fields: np.ndarray, axes, points, periodic: bool = True, order: int = 4) -> np.ndarray:
    """Tensor-product polynomial interpolation of one or several grid fields.

    ``fields`` has shape ``(*grid)`` or ``(K, *grid)``; ``points`` is ``(M, D)``.
    ``order=4`` uses four-point Lagrange stencils (fourth-order accurate),
    ``order=6`` six-point stencils, ``order=2`` multilinear. Points whose stencil leaves a non-periodic grid
    give NaN.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    D = len(axes)
    single = fields.ndim == D
    F = fields[None] if single else fields
    base, frac, bad = _locate(points, axes, periodic)
    if order == 4:
        offsets = (-1, 0, 1, 2)
        weights = [_lagrange4(t) for t in frac]
    elif order == 6:
        offsets = (-2, -1, 0, 1, 2, 3)
        weights = [_lagrange(t, offsets) for t in frac]
    elif order == 2:
        offsets = (0, 1)
        weights = [np.stack([1 - t, t]) for t in frac]
    else:
        raise ValueError("order must be 2, 4 or 6")
    shape = F.shape[1:]
    n = len(offsets)
    strides = np.cumprod((1,) + shape[::-1])[:-1][::-1]
    # per-axis stencil indices (n, M), wrapped or clipped
    flat_axis = []
    for a in range(D):
        i = base[a][None, :] + np.asarray(offsets)[:, None]
        if periodic:
            i = np.mod(i, shape[a])
        else:
            bad = bad | np.any((i < 0) | (i >= shape[a]), axis=0)
            i = np.clip(i, 0, shape[a] - 1)
        flat_axis.append(i * strides[a])
    Ff = F.reshape(F.shape[0], -1)
    M = points.shape[0]
    out = np.empty((F.shape[0], M), dtype=np.result_type(F.dtype, float))
    chunk = max(1, 2**16 // n**D)
    for lo in range(0, M, chunk):
        sl = slice(lo, min(lo + chunk, M))
        idx = flat_axis[0][:, sl]
        w = weights[0][:, sl]
        for a in range(1, D):
            idx = (idx[:, None, :] + flat_axis[a][None, :, sl]).reshape(-1, idx.shape[-1])
            w = (w[:, None, :] * weights[a][None, :, sl]).reshape(-1, w.shape[-1])
        out[:, sl] = np.einsum("kpm,pm->km", Ff[:, idx], w)
    if bad.any():
        out[:, bad] = np.nan
    return out[0] if single else out
