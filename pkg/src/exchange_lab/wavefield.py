"""Complex fields on configuration-space grids and their exchange symmetry."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import numerics
from .configspace import (
    ConfigGrid,
    ConfigSpaceError,
    Permutation,
    all_permutations,
    transpositions,
)

DEFAULT_NODE_REL = 1e-8
DEFAULT_SYMMETRY_TOL = 1e-6


class ZeroNormError(ValueError):
    """A projection annihilated the state (no component of the requested parity)."""


class IndefiniteParityError(ValueError):
    """The state is neither symmetric nor antisymmetric under a transposition."""


@dataclass(frozen=True, eq=False)
class WaveField:
    grid: ConfigGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=np.complex128, order="C")
        if a.shape != self.grid.shape:
            raise ConfigSpaceError(f"amplitudes {a.shape} do not match grid {self.grid.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_function(cls, grid: ConfigGrid, f: Callable[..., np.ndarray]) -> "WaveField":
        """Evaluate ``f(*mesh)`` where ``mesh`` has one array per configuration axis."""
        return cls(grid, f(*grid.mesh()))

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.cell_volume))

    def normalized(self) -> "WaveField":
        n = self.norm
        if n == 0:
            raise ZeroNormError("cannot normalise a zero field")
        return WaveField(self.grid, self.amplitudes / n)

    def inner(self, other: "WaveField") -> complex:
        """``<self|other>`` with the grid cell volume as measure."""
        _check_same_grid(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.cell_volume)

    def fidelity(self, other: "WaveField") -> float:
        return abs(self.inner(other)) / (self.norm * other.norm)

    def aligned_to(self, reference: "WaveField") -> "WaveField":
        """Remove the global phase relative to ``reference``."""
        ov = reference.inner(self)
        if ov == 0:
            return self
        return WaveField(self.grid, self.amplitudes * np.exp(-1j * np.angle(ov)))

    def distance(self, other: "WaveField") -> float:
        """L2 distance after global-phase alignment (state equivalence measure)."""
        diff = self.aligned_to(other).amplitudes - other.amplitudes
        return float(np.sqrt(np.sum(np.abs(diff) ** 2) * self.grid.cell_volume))

    def gradient(self) -> np.ndarray:
        """Fourth-order finite-difference gradient, shape ``(D, *grid)``."""
        return self._gradient

    @cached_property
    def _gradient(self) -> np.ndarray:
        h = self.grid.spacing
        g = np.stack([numerics.d1(self.amplitudes, a, h[a], self.grid.periodic) for a in range(self.grid.D)])
        g.setflags(write=False)
        return g

    def values_at(self, points: np.ndarray, order: int = 4) -> np.ndarray:
        return numerics.interpolate(self.amplitudes, self.grid.axes, points, self.grid.periodic, order)

    @cached_property
    def _smooth_gradient(self) -> np.ndarray:
        if not self.grid.periodic:
            return self.gradient()
        h = self.grid.spacing
        return np.stack([numerics.spectral_d(self.amplitudes, a, h[a]) for a in range(self.grid.D)])

    def phase_gradient_at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Phase gradient and magnitude at off-grid points, shape ``(M, D)`` and ``(M,)``.

        The field and its gradient are interpolated separately (both smooth,
        even across nodes) and combined as ``Im(conj(psi) grad psi) / |psi|^2``.
        On periodic grids the gradient here is spectral and the interpolation
        six-point: path integrals need more accuracy than fourth-order
        stencils give at desk resolution.
        """
        return phase_gradient_from(self.grid, self._value_and_gradient, points)

    @cached_property
    def _value_and_gradient(self) -> np.ndarray:
        return np.concatenate([self.amplitudes[None], self._smooth_gradient])

    @property
    def max_magnitude(self) -> float:
        return float(np.abs(self.amplitudes).max())

    @property
    def node_threshold(self) -> float:
        return DEFAULT_NODE_REL * self.max_magnitude

    def __add__(self, other: "WaveField") -> "WaveField":
        _check_same_grid(self, other)
        return WaveField(self.grid, self.amplitudes + other.amplitudes)

    def __sub__(self, other: "WaveField") -> "WaveField":
        _check_same_grid(self, other)
        return WaveField(self.grid, self.amplitudes - other.amplitudes)

    def __mul__(self, c) -> "WaveField":
        return WaveField(self.grid, self.amplitudes * c)

    __rmul__ = __mul__


def phase_gradient_from(grid: ConfigGrid, stacked: np.ndarray, points: np.ndarray):
    """``(grad theta, |psi|)`` at points from ``stacked = [psi, d_1 psi, ..., d_D psi]`` on the grid."""
    vals = numerics.interpolate(stacked, grid.axes, points, grid.periodic, order=6)
    psi, g = vals[0], vals[1:]
    mag2 = np.abs(psi) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        grad = (np.imag(np.conj(psi)[None] * g) / mag2).T
    return grad, np.sqrt(mag2)


def _check_same_grid(a: WaveField, b: WaveField):
    if a.grid != b.grid:
        raise ConfigSpaceError("fields live on different grids")


@dataclass(frozen=True, eq=False)
class PolarView:
    """Magnitude and per-axis phase gradient of a field; gradient is NaN on nodes."""

    grid: ConfigGrid
    R: np.ndarray
    grad_theta: np.ndarray
    node_mask: np.ndarray
    eps_node: float

    def slot_gradient(self, k: int) -> np.ndarray:
        """Gradient with respect to particle slot ``k``, shape ``(d, *grid)``."""
        return self.grad_theta[list(self.grid.particle_axes(k))]

    def velocity(self, mass: float = 1.0, hbar: float = 1.0) -> np.ndarray:
        return hbar / mass * self.grad_theta


def polar(psi: WaveField, eps_node: float | None = None) -> PolarView:
    """Polar decomposition with phase gradient ``Im(conj(psi) grad psi) / |psi|^2``.

    The gradient is spectral on periodic grids. ``eps_node`` defaults to
    ``1e-8 * max R``.
    """
    a = psi.amplitudes
    R = np.abs(a)
    if eps_node is None:
        eps_node = DEFAULT_NODE_REL * float(R.max())
    mask = R < eps_node if eps_node > 0 else R == 0
    mask |= R == 0
    g = psi._smooth_gradient
    with np.errstate(invalid="ignore", divide="ignore"):
        grad = np.imag(np.conj(a)[None] * g) / (R**2)[None]
    grad[:, mask] = np.nan
    for arr in (R, grad, mask):
        arr.setflags(write=False)
    return PolarView(psi.grid, R, grad, mask, float(eps_node))


def permute_array(arr: np.ndarray, grid: ConfigGrid, sigma: Permutation) -> np.ndarray:
    """``out[c] = arr[permute(c, sigma)]`` for arrays over the grid (trailing axes)."""
    lead = arr.ndim - grid.D
    axes = list(range(lead)) + [lead + a for a in grid.axis_permutation(sigma)]
    return np.ascontiguousarray(np.transpose(arr, axes))


def apply_permutation(psi: WaveField, sigma: Permutation) -> WaveField:
    return WaveField(psi.grid, permute_array(psi.amplitudes, psi.grid, sigma))


def apply_transposition(psi: WaveField, i: int, j: int) -> WaveField:
    return apply_permutation(psi, Permutation.transposition(psi.grid.n_particles, i, j))


class SymmetryClass(str, enum.Enum):
    SYMMETRIC = "Symmetric"
    ANTISYMMETRIC = "Antisymmetric"
    ASYMMETRIC = "Asymmetric"


@dataclass(frozen=True)
class SymmetryReport:
    cls: SymmetryClass
    s_plus: float
    s_minus: float
    pair: tuple[int, int] | None = None
    per_pair: dict = field(default_factory=dict)


def exchange_residuals(psi: WaveField, i: int, j: int) -> tuple[float, float]:
    """``(|psi - P psi|, |psi + P psi|) / (2 |psi|)`` for the transposition (i, j)."""
    p = apply_transposition(psi, i, j).amplitudes
    a = psi.amplitudes
    n = np.sqrt(np.sum(np.abs(a) ** 2))
    if n == 0:
        raise ZeroNormError("zero field has no exchange class")
    s_plus = float(np.sqrt(np.sum(np.abs(a - p) ** 2)) / (2 * n))
    s_minus = float(np.sqrt(np.sum(np.abs(a + p) ** 2)) / (2 * n))
    return s_plus, s_minus


def classify_symmetry(psi: WaveField, tol: float = DEFAULT_SYMMETRY_TOL) -> SymmetryReport:
    """Classify by the worst transposition.

    The reported residual pair belongs to the transposition with the largest
    residual for the winning class (largest ``min(s_plus, s_minus)`` when
    asymmetric). A single particle is trivially symmetric.
    """
    pairs = transpositions(psi.grid.n_particles)
    if not pairs:
        return SymmetryReport(SymmetryClass.SYMMETRIC, 0.0, 1.0)
    res = {p: exchange_residuals(psi, *p) for p in pairs}
    max_plus = max(r[0] for r in res.values())
    max_minus = max(r[1] for r in res.values())
    if max_plus < tol:
        cls, worst = SymmetryClass.SYMMETRIC, max(res, key=lambda p: res[p][0])
    elif max_minus < tol:
        cls, worst = SymmetryClass.ANTISYMMETRIC, max(res, key=lambda p: res[p][1])
    else:
        cls, worst = SymmetryClass.ASYMMETRIC, max(res, key=lambda p: min(res[p]))
    return SymmetryReport(cls, res[worst][0], res[worst][1], worst, res)


def _project(psi: WaveField, signed: bool, zero_tol: float) -> WaveField:
    total = np.zeros_like(psi.amplitudes)
    for sigma in all_permutations(psi.grid.n_particles):
        c = sigma.sign if signed else 1
        total += c * permute_array(psi.amplitudes, psi.grid, sigma)
    out = WaveField(psi.grid, total)
    if out.norm <= zero_tol * max(psi.norm, np.finfo(float).tiny):
        kind = "antisymmetric" if signed else "symmetric"
        raise ZeroNormError(f"state has no {kind} component")
    return out.normalized()


def symmetrize(psi: WaveField, zero_tol: float = 1e-10) -> WaveField:
    return _project(psi, False, zero_tol)


def antisymmetrize(psi: WaveField, zero_tol: float = 1e-10) -> WaveField:
    return _project(psi, True, zero_tol)


@dataclass(frozen=True)
class MixedParityVerdict:
    route_difference: float
    signs: dict
    consistent: bool

    @property
    def shared_sign(self) -> int | None:
        return self.signs[next(iter(self.signs))] if self.consistent else None


def parity_sign(psi: WaveField, i: int, j: int, tol: float = DEFAULT_SYMMETRY_TOL) -> int:
    s_plus, s_minus = exchange_residuals(psi, i, j)
    if s_plus < tol:
        return 1
    if s_minus < tol:
        return -1
    raise IndefiniteParityError(
        f"no definite parity under ({i}, {j}): s_plus={s_plus:.3g}, s_minus={s_minus:.3g}"
    )


def mixed_parity_check(
    psi: WaveField,
    ij: tuple[int, int],
    mn: tuple[int, int],
    tol: float = DEFAULT_SYMMETRY_TOL,
) -> MixedParityVerdict:
    """Swap (i, j) directly and via ``P_mj P_ni P_mn P_ni P_mj``.

    The two routes are the same group element, so they must agree pointwise.
    With definite parities the composed route multiplies by the (m, n) sign
    (the (m, j) and (n, i) signs enter squared), so the (i, j) and (m, n)
    signs are forced to agree.
    """
    i, j = ij
    m, n = mn
    if len({i, j, m, n}) != 4:
        raise ValueError("need four distinct particle indices")
    if psi.grid.n_particles < 4:
        raise ValueError("need at least four particles")
    direct = apply_transposition(psi, i, j)
    composed = psi
    for a, b in [(m, j), (n, i), (m, n), (n, i), (m, j)]:
        composed = apply_transposition(composed, a, b)
    diff = float(np.max(np.abs(direct.amplitudes - composed.amplitudes)))
    signs = {}
    for a, b in [(i, j), (m, n), (m, j), (n, i)]:
        signs[(a, b)] = parity_sign(psi, a, b, tol)
    predicted = signs[(m, j)] ** 2 * signs[(n, i)] ** 2 * signs[(m, n)]
    return MixedParityVerdict(diff, signs, signs[(i, j)] == predicted)


def mixed_parity_projection(
    psi: WaveField,
    sym_pair: tuple[int, int],
    anti_pair: tuple[int, int],
    sweeps: int = 400,
) -> float:
    """Largest surviving norm fraction after projecting onto mixed exchange parity.

    Alternating projections onto "symmetric under ``sym_pair``",
    "antisymmetric under ``anti_pair``" and "definite parity (either sign)
    under the two linking transpositions" converge to the projection onto the
    intersection of those eigenspaces. All four sign choices for the linking
    transpositions are tried; the maximum remaining norm is returned.
    """
    i, j = sym_pair
    m, n = anti_pair
    grid = psi.grid
    N = grid.n_particles
    T = lambda a, b: Permutation.transposition(N, a, b)
    a0 = psi.amplitudes / np.sqrt(np.sum(np.abs(psi.amplitudes) ** 2))
    worst = 0.0
    for s1 in (1, -1):
        for s2 in (1, -1):
            steps = [(T(i, j), 1), (T(m, n), -1), (T(m, j), s1), (T(n, i), s2)]
            a = a0.copy()
            for _ in range(sweeps):
                for sigma, s in steps:
                    a = 0.5 * (a + s * permute_array(a, grid, sigma))
                nrm = np.sqrt(np.sum(np.abs(a) ** 2))
                if nrm < 1e-15:
                    break
            worst = max(worst, float(np.sqrt(np.sum(np.abs(a) ** 2))))
    return worst
