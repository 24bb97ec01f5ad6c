"""Paths in configuration space and adaptive line integrals of phase gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .configspace import ParticleConfig, Permutation, all_permutations, canonical_order, permute

CLOSE_ATOL = 1e-9


class MaskedPathError(ValueError):
    """A path sample fell inside the node mask of the field being integrated."""


class PhaseGradientSource(Protocol):
    node_threshold: float

    def phase_gradient_at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


def _canonical_flat(p: np.ndarray, N: int, d: int) -> np.ndarray:
    pos = p.reshape(N, d)
    return pos[canonical_order(pos)].reshape(-1)


@dataclass(frozen=True, eq=False)
class PathPolyline:
    """Ordered configuration-space points ``(K, D)``.

    ``param`` optionally maps ``n`` to ``n + 1`` points on the underlying
    smooth curve, so refinement samples the curve instead of the chords.
    """

    points: np.ndarray
    n_particles: int
    dim: int
    param: Callable[[int], np.ndarray] | None = None
    path_id: str = ""

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != self.n_particles * self.dim or p.shape[0] < 2:
            raise ValueError(f"path points must be (K >= 2, {self.n_particles * self.dim})")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @classmethod
    def from_curve(cls, f: Callable[[np.ndarray], np.ndarray], n_particles: int, dim: int, n: int = 64, path_id=""):
        """Sample ``f(s)`` for ``s`` in ``[0, 1]``; ``f`` returns ``(len(s), D)``."""
        param = lambda k: f(np.linspace(0.0, 1.0, k + 1))
        return cls(param(n), n_particles, dim, param, path_id)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def closed_in_full(self) -> bool:
        return bool(np.allclose(self.start, self.end, atol=CLOSE_ATOL, rtol=0))

    @property
    def closed_in_reduced(self) -> bool:
        a = _canonical_flat(self.start, self.n_particles, self.dim)
        b = _canonical_flat(self.end, self.n_particles, self.dim)
        return bool(np.allclose(a, b, atol=CLOSE_ATOL, rtol=0))

    def endpoint_permutation(self) -> Permutation | None:
        """The permutation ``sigma`` with ``end = permute(start, sigma)``, if any."""
        c = ParticleConfig(self.start.reshape(self.n_particles, self.dim))
        for s in all_permutations(self.n_particles):
            if np.allclose(permute(c, s).flat(), self.end, atol=CLOSE_ATOL, rtol=0):
                return s
        return None

    def refined(self) -> "PathPolyline":
        k = self.points.shape[0] - 1
        if self.param is not None:
            return PathPolyline(self.param(2 * k), self.n_particles, self.dim, self.param, self.path_id)
        mids = 0.5 * (self.points[:-1] + self.points[1:])
        out = np.empty((2 * k + 1, self.points.shape[1]))
        out[0::2] = self.points
        out[1::2] = mids
        return PathPolyline(out, self.n_particles, self.dim, None, self.path_id)

    def permuted(self, sigma: Permutation) -> "PathPolyline":
        idx = _slot_index(sigma, self.n_particles, self.dim)
        param = None if self.param is None else (lambda k, f=self.param: f(k)[:, idx])
        return PathPolyline(self.points[:, idx], self.n_particles, self.dim, param, self.path_id)

    def then(self, other: "PathPolyline") -> "PathPolyline":
        if not np.allclose(self.end, other.start, atol=CLOSE_ATOL, rtol=0):
            raise ValueError("paths do not join")
        param = None
        if self.param is not None and other.param is not None:
            f, g = self.param, other.param
            param = lambda k: np.concatenate([f(k), g(k)[1:]])
        pts = np.concatenate([self.points, other.points[1:]])
        return PathPolyline(pts, self.n_particles, self.dim, param, self.path_id)

    def doubled(self) -> "PathPolyline":
        """Append the permuted image of this path, returning to the start in full space."""
        if self.closed_in_full:
            return self.then(self)
        s = self.endpoint_permutation()
        if s is None:
            raise ValueError("path endpoints are not permuted images of each other")
        return self.then(self.permuted(s))

    def repeated(self, times: int) -> "PathPolyline":
        if not self.closed_in_full:
            raise ValueError("only full-space loops can be repeated")
        p = self
        for _ in range(times - 1):
            p = p.then(self)
        return p

    def to_dict(self) -> dict:
        return {
            "path_id": self.path_id,
            "points": self.points.tolist(),
            "closed_in_full": self.closed_in_full,
            "closed_in_reduced": self.closed_in_reduced,
        }


def _slot_index(sigma: Permutation, N: int, d: int) -> list[int]:
    return [sigma(i) * d + c for i in range(N) for c in range(d)]


def relative_loop(
    turns: float = 0.5,
    radius: float = 1.0,
    center_cm=(0.0, 0.0),
    start_angle: float = 0.0,
    radial_wobble: float = 0.0,
    cm_wobble=(0.0, 0.0),
    n: int = 64,
    path_id: str = "",
) -> PathPolyline:
    """Two particles in 2D whose relative vector sweeps ``turns`` revolutions.

    ``x_rel = x2 - x1`` has polar angle ``start_angle + 2 pi turns s``. The
    wobbles deform the path with period pi in the angle, so half loops still
    end at the exchanged configuration.
    """
    cm = np.asarray(center_cm, float)
    cw = np.asarray(cm_wobble, float)

    def f(s):
        phi = start_angle + 2 * np.pi * turns * s
        r = radius * (1 + radial_wobble * np.sin(2 * (phi - start_angle)))
        c = cm[None, :] + cw[None, :] * np.sin(2 * (phi - start_angle))[:, None]
        rel = r[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return np.concatenate([c - rel / 2, c + rel / 2], axis=1)

    return PathPolyline.from_curve(f, 2, 2, n, path_id)


def relative_segment_1d(x_cm: float, a: float, n: int = 64, path_id: str = "") -> PathPolyline:
    """Two particles on a line swapping through coincidence: ``x_rel`` runs from ``a`` to ``-a``."""

    def f(s):
        rel = a * (1 - 2 * s)
        return np.stack([x_cm - rel / 2, x_cm + rel / 2], axis=1)

    return PathPolyline.from_curve(f, 2, 1, n, path_id)


def offset_loop(center, radius: float, axes=(0, 1), n: int = 64, path_id: str = "") -> PathPolyline:
    """A full circle in the plane of two configuration axes (contractible away from nodes)."""
    center = np.asarray(center, float)
    D = center.size

    def f(s):
        out = np.repeat(center[None], s.size, axis=0)
        out[:, axes[0]] += radius * np.cos(2 * np.pi * s)
        out[:, axes[1]] += radius * np.sin(2 * np.pi * s)
        return out

    dim = 2 if D == 4 else 1 if D == 2 else None
    if dim is None:
        raise ValueError("offset_loop supports two particles in 1D or 2D")
    return PathPolyline.from_curve(f, 2, dim, n, path_id)


def _trapezoid(source: PhaseGradientSource, path: PathPolyline) -> float:
    g, mag = source.phase_gradient_at(path.points)
    if np.any(~(mag > source.node_threshold)) or not np.all(np.isfinite(g)):
        k = int(np.argmin(np.where(np.isfinite(mag), mag, -1)))
        raise MaskedPathError(f"path {path.path_id!r} touches the node mask near {np.round(path.points[k], 4).tolist()}")
    dl = np.diff(path.points, axis=0)
    return float(np.sum(0.5 * (g[:-1] + g[1:]) * dl))


def line_integral(source: PhaseGradientSource, path: PathPolyline, tol: float = 1e-4, max_refine: int = 14) -> float:
    """Trapezoid integral of the phase gradient along ``path``, refined until stable.

    Halves the spacing until successive estimates differ by less than ``tol``
    and returns the Richardson-corrected final estimate.
    """
    prev = _trapezoid(source, path)
    for _ in range(max_refine):
        path = path.refined()
        cur = _trapezoid(source, path)
        if abs(cur - prev) < tol:
            return cur + (cur - prev) / 3
        prev = cur
    raise RuntimeError(f"line integral along {path.path_id!r} did not converge to {tol}")
