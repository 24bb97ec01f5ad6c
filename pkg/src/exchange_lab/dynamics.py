"""Split-operator evolution and Madelung-form consistency checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import numerics
from .configspace import ConfigGrid, ConfigSpaceError, Permutation, transpositions
from .wavefield import (
    WaveField,
    classify_symmetry,
    exchange_residuals,
    permute_array,
)


class AsymmetricPotentialError(ValueError):
    pass


class MaskedRegionError(ValueError):
    """Every probed point fell inside the node mask."""


@dataclass(frozen=True, eq=False)
class Potential:
    """Real potential over a configuration grid.

    ``values`` is a static array; ``func`` (if given) maps time to an array and
    takes precedence. With ``symmetric`` set, exchange invariance is checked
    bitwise at construction (at t = 0 for time-dependent potentials).
    """

    grid: ConfigGrid
    values: np.ndarray | None = None
    symmetric: bool = True
    func: Callable[[float], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.values is None and self.func is None:
            raise ValueError("potential needs values or func")
        if self.values is not None:
            v = np.array(self.values, dtype=float)
            if v.shape != self.grid.shape:
                raise ConfigSpaceError("potential does not match grid")
            v.setflags(write=False)
            object.__setattr__(self, "values", v)
        if self.symmetric:
            v0 = self.at(0.0)
            for i, j in transpositions(self.grid.n_particles):
                p = permute_array(v0, self.grid, Permutation.transposition(self.grid.n_particles, i, j))
                if not np.array_equal(p, v0):
                    raise AsymmetricPotentialError(f"potential not invariant under ({i}, {j})")

    @property
    def time_dependent(self) -> bool:
        return self.func is not None

    def at(self, t: float) -> np.ndarray:
        if self.func is not None:
            return np.asarray(self.func(t), dtype=float)
        return self.values


def one_body_potential(grid: ConfigGrid, f: Callable[[np.ndarray], np.ndarray], pair=None) -> Potential:
    """``sum_k f(x_k) + sum_{i<j} pair(x_i - x_j)`` built exactly exchange-invariant.

    ``f`` and ``pair`` receive position arrays of shape ``(d, *grid)``. Terms are
    sorted before summation so permuted grid points see bitwise-equal sums.
    """
    mesh = np.stack(grid.mesh())
    terms = [f(mesh[list(grid.particle_axes(k))]) for k in range(grid.n_particles)]
    V = np.sort(np.stack(terms), axis=0).sum(axis=0)
    if pair is not None and grid.n_particles > 1:
        pts = [mesh[list(grid.particle_axes(k))] for k in range(grid.n_particles)]
        pterms = [pair(pts[i] - pts[j]) for i, j in transpositions(grid.n_particles)]
        V = V + np.sort(np.stack(pterms), axis=0).sum(axis=0)
    return Potential(grid, V, symmetric=True)


def harmonic(grid: ConfigGrid, omega: float = 1.0, mass: float = 1.0) -> Potential:
    return one_body_potential(grid, lambda x: 0.5 * mass * omega**2 * np.sum(x**2, axis=0))


def free(grid: ConfigGrid) -> Potential:
    return Potential(grid, np.zeros(grid.shape), symmetric=True)


def double_well(grid: ConfigGrid, a: float = 1.5, depth: float = 1.0) -> Potential:
    """``depth * (|x|^2 - a^2)^2 / a^4`` per particle."""
    return one_body_potential(grid, lambda x: depth * (np.sum(x**2, axis=0) - a * a) ** 2 / a**4)


def polynomial(grid: ConfigGrid, coeffs) -> Potential:
    """One-body polynomial ``sum_n coeffs[n] |x|^n`` (odd powers use the signed 1D coordinate)."""

    def f(x):
        r = x[0] if x.shape[0] == 1 else np.sqrt(np.sum(x**2, axis=0))
        return sum(c * r**n for n, c in enumerate(coeffs))

    return one_body_potential(grid, f)


class SplitOperator:
    """Strang splitting: half kinetic step, full potential step, half kinetic step."""

    def __init__(self, grid: ConfigGrid, potential: Potential, dt: float, mass: float = 1.0, hbar: float = 1.0):
        if potential.grid != grid:
            raise ConfigSpaceError("potential defined on a different grid")
        self.grid = grid
        self.potential = potential
        self.dt = dt
        self.mass = mass
        self.hbar = hbar
        ks = [numerics.wavenumbers(n, h) for n, h in zip(grid.shape, grid.spacing)]
        k2 = np.zeros(grid.shape)
        for a, k in enumerate(ks):
            shape = [1] * grid.D
            shape[a] = -1
            k2 = k2 + (k**2).reshape(shape)
        self.kinetic = hbar * k2 / (2 * mass)
        self._half_kin = np.exp(-0.5j * dt * self.kinetic / hbar)
        self._pot_phase = None if potential.time_dependent else np.exp(-1j * dt * potential.values / hbar)

    def step(self, a: np.ndarray, t: float = 0.0) -> np.ndarray:
        pot = self._pot_phase
        if pot is None:
            pot = np.exp(-1j * self.dt * self.potential.at(t + self.dt / 2) / self.hbar)
        a = np.fft.ifftn(self._half_kin * np.fft.fftn(a))
        a = a * pot
        return np.fft.ifftn(self._half_kin * np.fft.fftn(a))

    def hamiltonian_apply(self, a: np.ndarray, t: float = 0.0) -> np.ndarray:
        return np.fft.ifftn(self.kinetic * np.fft.fftn(a)) + self.potential.at(t) * a

    def energy(self, psi: WaveField, t: float = 0.0) -> float:
        a = psi.amplitudes
        return float(np.real(np.vdot(a, self.hamiltonian_apply(a, t))) / np.vdot(a, a).real)

    def matrix(self) -> np.ndarray:
        """Dense one-step propagator (small grids only)."""
        n = self.grid.size
        if n > 4096:
            raise ValueError("grid too large for a dense propagator")
        eye = np.eye(n, dtype=complex).reshape((n,) + self.grid.shape)
        cols = [self.step(e).reshape(-1) for e in eye]
        return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class EvolutionRecord:
    grid: ConfigGrid
    potential: Potential
    times: np.ndarray
    snapshots: list
    dt: float
    steps_per_snapshot: int = 1
    mass: float = 1.0
    hbar: float = 1.0

    @property
    def snapshot_dt(self) -> float:
        return self.dt * self.steps_per_snapshot

    def __len__(self):
        return len(self.snapshots)


def propagate(
    psi0: WaveField,
    potential: Potential,
    dt: float,
    steps: int,
    dump_every: int = 1,
    mass: float = 1.0,
    hbar: float = 1.0,
    t0: float = 0.0,
) -> EvolutionRecord:
    """Evolve ``steps`` split-operator steps, keeping every ``dump_every``-th snapshot."""
    prop = SplitOperator(psi0.grid, potential, dt, mass, hbar)
    a = psi0.amplitudes.copy()
    snaps, times = [psi0], [t0]
    t = t0
    for n in range(1, steps + 1):
        a = prop.step(a, t)
        t = t0 + n * dt
        if n % dump_every == 0:
            snaps.append(WaveField(psi0.grid, a))
            times.append(t)
    return EvolutionRecord(psi0.grid, potential, np.array(times), snaps, dt, dump_every, mass, hbar)


def propagator_eigenstates(grid: ConfigGrid, potential: Potential, dt: float, count: int, mass: float = 1.0):
    """Lowest eigenvectors of the one-step split-operator propagator.

    Eigenvectors of the unitary step ``U = exp(-i H_eff dt)`` are those of the
    Hermitian ``(U^H - U) / 2i = sin(H_eff dt)``; for ``dt * E_max < pi / 2``
    its eigenvalue order is the energy order. Such states are stationary under :func:`propagate` to
    round-off, unlike the analytic eigenfunctions which carry an O(dt^2)
    splitting mismatch. Returns ``(energies, states)`` with states as real
    arrays normalised on the grid.
    """
    prop = SplitOperator(grid, potential, dt, mass)
    e_max = prop.kinetic.max() + np.abs(potential.at(0.0)).max()
    if dt * e_max >= np.pi / 2:
        raise ValueError(f"dt * E_max = {dt * e_max:.3g} >= pi/2; reduce dt or the grid extent")
    U = prop.matrix()
    B = (U.conj().T - U) / 2j
    w, v = np.linalg.eigh(B)
    energies = np.arcsin(np.clip(w[:count], -1, 1)) / dt
    states = []
    for k in range(count):
        vec = v[:, k]
        vec = vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))]))
        vec = vec.real.reshape(grid.shape)
        vec /= np.sqrt(np.sum(vec**2) * grid.cell_volume)
        states.append(vec)
    return energies, states


@dataclass(frozen=True)
class DriftSeries:
    times: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    classes: list


def symmetry_drift(record: EvolutionRecord) -> DriftSeries:
    """Worst-transposition exchange residuals per snapshot."""
    if not record.potential.symmetric:
        raise AsymmetricPotentialError("symmetry drift needs an exchange-invariant potential")
    sp, sm, cls = [], [], []
    pairs = transpositions(record.grid.n_particles)
    for psi in record.snapshots:
        res = [exchange_residuals(psi, *p) for p in pairs] or [(0.0, 1.0)]
        sp.append(max(r[0] for r in res))
        sm.append(max(r[1] for r in res))
        cls.append(classify_symmetry(psi).cls)
    return DriftSeries(record.times, np.array(sp), np.array(sm), cls)


def time_series(record: EvolutionRecord) -> list[dict]:
    """Rows ``(step, t, norm, energy, s_plus, s_minus)`` for CSV output."""
    prop = SplitOperator(record.grid, record.potential, record.dt, record.mass, record.hbar)
    pairs = transpositions(record.grid.n_particles)
    rows = []
    for k, (t, psi) in enumerate(zip(record.times, record.snapshots)):
        res = [exchange_residuals(psi, *p) for p in pairs] or [(0.0, 1.0)]
        rows.append(
            {
                "step": k * record.steps_per_snapshot,
                "t": float(t),
                "norm": psi.norm,
                "energy": prop.energy(psi, float(t)),
                "s_plus": max(r[0] for r in res),
                "s_minus": max(r[1] for r in res),
            }
        )
    return rows


# --- Madelung form -----------------------------------------------------------------


@dataclass(frozen=True)
class MadelungResidual:
    times: np.ndarray
    max_abs: np.ndarray
    max_rel: np.ndarray
    lhs_scale: np.ndarray

    @property
    def worst_rel(self) -> float:
        return float(np.max(self.max_rel))

    @property
    def worst_abs(self) -> float:
        return float(np.max(self.max_abs))


def _derivs(arr, grid, method):
    h = grid.spacing
    if method == "spectral":
        first = [numerics.spectral_d(arr, a, h[a], 1) for a in range(grid.D)]
        second = [numerics.spectral_d(arr, a, h[a], 2) for a in range(grid.D)]
    else:
        first = [numerics.d1(arr, a, h[a], grid.periodic) for a in range(grid.D)]
        second = [numerics.d2(arr, a, h[a], grid.periodic) for a in range(grid.D)]
    return first, second


def _probe(R, probe_rel):
    mask = R > probe_rel * R.max()
    if not mask.any():
        raise MaskedRegionError("probe region is empty")
    return mask


def _madelung_terms(psi: WaveField, method: str):
    a = psi.amplitudes
    R = np.abs(a)
    grid = psi.grid
    da, dda = _derivs(a, grid, method)
    dR, ddR = _derivs(R, grid, method)
    with np.errstate(invalid="ignore", divide="ignore"):
        grad_theta = [np.imag(np.conj(a) * g) / R**2 for g in da]
    return R, grad_theta, ddR


def madelung_theta_residual(
    record: EvolutionRecord, probe_rel: float = 1e-3, method: str = "spectral"
) -> MadelungResidual:
    """Compare a centred time difference of the phase with the Madelung phase equation.

    At interior snapshot ``n`` the left side is ``arg(psi_{n+1} conj(psi_{n-1})) / 2 dt``;
    the right side is ``sum_i [hbar/2m lap_i R / R - m/2hbar |v_i|^2] - V / hbar``.
    The relative error is the maximum mismatch over the probe region divided by
    the maximum of the right side there.
    """
    m, hb = record.mass, record.hbar
    dt = record.snapshot_dt
    times, mabs, mrel, scale = [], [], [], []
    for n in range(1, len(record.snapshots) - 1):
        prev, cur, nxt = (record.snapshots[k].amplitudes for k in (n - 1, n, n + 1))
        R, gt, ddR = _madelung_terms(record.snapshots[n], method)
        mask = _probe(R, probe_rel)
        lhs = np.angle(nxt * np.conj(prev)) / (2 * dt)
        with np.errstate(invalid="ignore", divide="ignore"):
            rhs = sum(hb / (2 * m) * d / R - (m / (2 * hb)) * (hb / m * g) ** 2 for d, g in zip(ddR, gt))
        rhs = rhs - record.potential.at(float(record.times[n])) / hb
        err = np.abs(lhs - rhs)[mask]
        s = np.max(np.abs(rhs[mask]))
        times.append(record.times[n])
        mabs.append(err.max())
        mrel.append(err.max() / s)
        scale.append(s)
    return MadelungResidual(np.array(times), np.array(mabs), np.array(mrel), np.array(scale))


def madelung_continuity_residual(
    record: EvolutionRecord, probe_rel: float = 1e-3, method: str = "spectral"
) -> MadelungResidual:
    """Check ``dR/dt = -(1/2R) sum_i (hbar/m) div_i(R^2 grad_i theta)`` with centred differences."""
    m, hb = record.mass, record.hbar
    dt = record.snapshot_dt
    grid = record.grid
    h = grid.spacing
    times, mabs, mrel, scale = [], [], [], []
    for n in range(1, len(record.snapshots) - 1):
        R, gt, _ = _madelung_terms(record.snapshots[n], method)
        mask = _probe(R, probe_rel)
        lhs = (np.abs(record.snapshots[n + 1].amplitudes) - np.abs(record.snapshots[n - 1].amplitudes)) / (2 * dt)
        div = np.zeros(grid.shape)
        for a in range(grid.D):
            flux = np.nan_to_num(R**2 * gt[a])
            if method == "spectral":
                div += numerics.spectral_d(flux, a, h[a], 1)
            else:
                div += numerics.d1(flux, a, h[a], grid.periodic)
        with np.errstate(invalid="ignore", divide="ignore"):
            rhs = -(hb / m) * div / (2 * R)
        err = np.abs(lhs - rhs)[mask]
        s = max(np.max(np.abs(rhs[mask])), np.max(np.abs(lhs[mask])))
        times.append(record.times[n])
        mabs.append(err.max())
        mrel.append(err.max() / s if s > 0 else np.inf)
        scale.append(s)
    return MadelungResidual(np.array(times), np.array(mabs), np.array(mrel), np.array(scale))


def unmasked_components(mask_or_R: np.ndarray, periodic: bool = True, rel: float = 1e-8) -> int:
    """Number of connected components of the non-node region (face connectivity)."""
    from scipy import ndimage

    arr = np.asarray(mask_or_R)
    keep = arr if arr.dtype == bool else arr > rel * arr.max()
    labels, count = ndimage.label(keep)
    if periodic and count > 1:
        # merge labels touching across periodic faces
        parent = list(range(count + 1))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for ax in range(arr.ndim):
            a = np.take(labels, 0, axis=ax)
            b = np.take(labels, -1, axis=ax)
            for u, v in zip(a.ravel(), b.ravel()):
                if u and v:
                    parent[find(u)] = find(v)
        count = len({find(x) for x in range(1, count + 1)})
    return int(count)
