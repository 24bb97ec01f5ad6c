"""Bohmian guidance: linked velocities, the N!-mapping consistency test, trajectories."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import numerics
from .configspace import ConfigGrid, ParticleConfig, Permutation, all_permutations, canonical_order, transpositions
from .dynamics import EvolutionRecord
from .sampling import draw_configs, kde_grid, l1_distance, orbit_expand, silverman_bandwidth
from .wavefield import PolarView, WaveField, permute_array, polar


class NodeError(ValueError):
    """Guidance velocity requested where the wave function vanishes."""


class TrajectoryFailure(RuntimeError):
    def __init__(self, message, time=None, location=None):
        super().__init__(message)
        self.time = time
        self.location = location


class ExcessiveFailures(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class UnorderedParticleSet:
    """A multiset of N positions in d dimensions, stored in canonical order."""

    positions: np.ndarray

    def __post_init__(self):
        p = np.array(self.positions, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        p = p[canonical_order(p)]
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def __eq__(self, other):
        if not isinstance(other, UnorderedParticleSet):
            return NotImplemented
        return self.positions.shape == other.positions.shape and bool(np.array_equal(self.positions, other.positions))

    def __hash__(self):
        return hash(self.positions.tobytes())

    def as_config(self, sigma: Permutation | None = None) -> ParticleConfig:
        """Assign positions to slots: slot ``i`` gets position ``sigma(i)``."""
        pos = self.positions
        if sigma is not None:
            pos = pos[list(sigma.mapping)]
        return ParticleConfig(pos)


@dataclass(frozen=True)
class VelocityAssignment:
    """Velocities per physical position (aligned with ``UnorderedParticleSet.positions``)."""

    positions: np.ndarray
    velocities: np.ndarray
    disagreement: float
    per_mapping: np.ndarray = field(repr=False)


def _polar(psi: WaveField, pv: PolarView | None) -> PolarView:
    return polar(psi) if pv is None else pv


def velocity_at(pv: PolarView, points: np.ndarray, mass: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """Interpolated guidance velocities at flat configurations ``(M, D)``; NaN near nodes."""
    return hbar / mass * numerics.interpolate(pv.grad_theta, pv.grid.axes, points, pv.grid.periodic).T


def linked_velocity(psi: WaveField, config: ParticleConfig, pv: PolarView | None = None, mass=1.0, hbar=1.0):
    """Per-particle velocities ``(N, d)`` from the phase gradient at ``config``."""
    pv = _polar(psi, pv)
    grid = psi.grid
    flat = config.flat()
    R = numerics.interpolate(pv.R, grid.axes, flat[None], grid.periodic)[0]
    v = velocity_at(pv, flat[None], mass, hbar)[0]
    if not R > pv.eps_node or not np.all(np.isfinite(v)):
        raise NodeError(f"configuration {config.positions.tolist()} lies in the node mask; velocity undefined")
    return v.reshape(config.N, config.d)


def unlinked_velocity(psi: WaveField, s: UnorderedParticleSet, pv: PolarView | None = None, mass=1.0, hbar=1.0):
    """Velocities of an unlabelled set computed through every slot assignment.

    Each of the ``N!`` mappings yields a velocity for every physical
    position; the assignment reports their mean and the largest pairwise
    spread.
    """
    pv = _polar(psi, pv)
    perms = all_permutations(s.N)
    stack = np.empty((len(perms), s.N, s.d))
    for k, sigma in enumerate(perms):
        v = linked_velocity(psi, s.as_config(sigma), pv, mass, hbar)
        # slot i holds position sigma(i)
        stack[k, list(sigma.mapping)] = v
    diff = stack[:, None] - stack[None, :]
    disagreement = float(np.linalg.norm(diff, axis=-1).max()) if len(perms) > 1 else 0.0
    return VelocityAssignment(s.positions, stack.mean(axis=0), disagreement, stack)


@dataclass(frozen=True)
class ConsistencyResult:
    residual: float
    empty: bool
    argmax_point: tuple | None
    pair: tuple[int, int] | None
    probe_count: int


def _relabelled_gradient(G: np.ndarray, grid: ConfigGrid, tau: Permutation) -> np.ndarray:
    """Gradient with respect to each particle, read off at the permuted configuration."""
    Gp = permute_array(G, grid, tau)
    d = grid.dim
    out = np.empty_like(Gp)
    for i in range(grid.n_particles):
        j = tau(i)
        out[i * d : (i + 1) * d] = Gp[j * d : (j + 1) * d]
    return out


def consistency_residual(psi: WaveField, pv: PolarView | None = None) -> ConsistencyResult:
    """Largest disagreement of per-particle phase gradients between permuted configurations.

    Only grid points whose whole orbit is outside the node mask are probed.
    """
    pv = _polar(psi, pv)
    grid = psi.grid
    if grid.n_particles < 2:
        return ConsistencyResult(0.0, True, None, None, 0)
    valid = ~pv.node_mask
    for sigma in all_permutations(grid.n_particles):
        valid &= ~permute_array(pv.node_mask, grid, sigma)
    if not valid.any():
        return ConsistencyResult(0.0, True, None, None, 0)
    d = grid.dim
    best, where, pair = -1.0, None, None
    G = pv.grad_theta
    for i, j in transpositions(grid.n_particles):
        tau = Permutation.transposition(grid.n_particles, i, j)
        diff = _relabelled_gradient(G, grid, tau) - G
        norms = np.sqrt((diff.reshape(grid.n_particles, d, *grid.shape) ** 2).sum(axis=1)).max(axis=0)
        norms = np.where(valid, norms, -np.inf)
        k = int(np.argmax(norms))
        if norms.flat[k] > best:
            best = float(norms.flat[k])
            where = grid.point(np.unravel_index(k, grid.shape)).flat()
            pair = (i, j)
    return ConsistencyResult(best, False, tuple(float(x) for x in where), pair, int(valid.sum()))


@dataclass(frozen=True, eq=False)
class Trajectories:
    """Positions at snapshot times, shape ``(T, M, D)``; failed samples freeze at their last good point."""

    times: np.ndarray
    positions: np.ndarray
    failed: np.ndarray
    failure_times: np.ndarray
    failure_points: np.ndarray
    substeps: np.ndarray

    @property
    def failure_fraction(self) -> float:
        return float(self.failed.mean()) if self.failed.size else 0.0

    def csv_rows(self):
        """Rows ``(sample_id, step, t, x1..xD)``."""
        T, M, _ = self.positions.shape
        for m in range(M):
            for k in range(T):
                yield (m, k, float(self.times[k]), *map(float, self.positions[k, m]))


class _VelocityFields:
    """Guidance velocities per snapshot as quintic-spline coefficients.

    Lagrange stencils are only continuous across cells, which defeats RK4
    error control; a C4 spline keeps the integrand smooth. Points within
    ``guard`` cells of the node mask (or of a non-periodic edge) give NaN.
    """

    def __init__(self, record: EvolutionRecord, guard: int, eps_rel: float | None):
        self.record = record
        self.guard = guard
        self.eps_rel = eps_rel
        grid = record.grid
        self.lo = np.array([ax[0] for ax in grid.axes])
        self.h = np.array(grid.spacing)
        self.mode = "grid-wrap" if grid.periodic else "nearest"
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _build(self, k: int):
        grid = self.record.grid
        psi = self.record.snapshots[k]
        eps = None if self.eps_rel is None else self.eps_rel * psi.max_magnitude
        pv = polar(psi, eps)
        bad = pv.node_mask.copy()
        for _ in range(self.guard):
            grown = bad.copy()
            for a in range(grid.D):
                grown |= np.roll(bad, 1, a) | np.roll(bad, -1, a)
            bad = grown
        if not grid.periodic:
            for a in range(grid.D):
                sl = [slice(None)] * grid.D
                sl[a] = slice(0, self.guard)
                bad[tuple(sl)] = True
                sl[a] = slice(-self.guard, None)
                bad[tuple(sl)] = True
        v = np.nan_to_num(pv.velocity(self.record.mass, self.record.hbar))
        coeffs = np.stack([ndimage.spline_filter(c, order=5, mode=self.mode) for c in v])
        return coeffs, bad.astype(float)

    def at(self, k: int, points: np.ndarray) -> np.ndarray:
        if k not in self._cache:
            if len(self._cache) > 4:
                self._cache.pop(min(self._cache))
            self._cache[k] = self._build(k)
        coeffs, bad = self._cache[k]
        u = ((points - self.lo) / self.h).T
        v = np.stack(
            [ndimage.map_coordinates(c, u, order=5, mode=self.mode, prefilter=False) for c in coeffs], axis=1
        )
        hit = ndimage.map_coordinates(bad, u, order=1, mode=self.mode) > 0
        if self.mode == "nearest":
            hit |= np.any((u < 0) | (u > np.array(bad.shape)[:, None] - 1), axis=0)
        v[hit] = np.nan
        return v


def transport(
    record: EvolutionRecord,
    starts: np.ndarray,
    tol: float = 1e-8,
    guard: int = 2,
    node_rel: float | None = None,
    max_halvings: int = 12,
) -> Trajectories:
    """Carry many configurations through the recorded guidance field.

    Classical RK4 through spline-interpolated velocity grids, linear in time
    between snapshots. Each snapshot interval is integrated with ``n`` and ``2n``
    substeps; ``n`` doubles until the step-doubling error estimate
    ``|y_2n - y_n| / 15`` is below ``tol``.
    """
    grid = record.grid
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    M, D = starts.shape
    if D != grid.D:
        raise ValueError(f"start configurations have dimension {D}, grid has {grid.D}")
    fields = _VelocityFields(record, guard, node_rel)
    times = np.asarray(record.times)
    T = len(times)
    pos = np.empty((T, M, D))
    pos[0] = starts
    failed = np.zeros(M, bool)
    f_time = np.full(M, np.nan)
    f_point = np.full((M, D), np.nan)
    lo = np.array([ax[0] for ax in grid.axes])
    hi = np.array([ax[-1] for ax in grid.axes])

    def vel(y, k, s):
        v0 = fields.at(k, y)
        if s == 0.0:
            return v0
        return (1 - s) * v0 + s * fields.at(k + 1, y)

    def run(y, k, n):
        h = (times[k + 1] - times[k]) / n
        for j in range(n):
            s0 = j / n
            k1 = vel(y, k, s0)
            k2 = vel(y + 0.5 * h * k1, k, s0 + 0.5 / n)
            k3 = vel(y + 0.5 * h * k2, k, s0 + 0.5 / n)
            k4 = vel(y + h * k3, k, s0 + 1.0 / n)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return y

    y = starts.copy()
    bad0 = ~np.all(np.isfinite(vel(y, 0, 0.0)), axis=1)
    failed |= bad0
    f_time[bad0] = times[0]
    f_point[bad0] = y[bad0]
    n = 1
    substeps = np.zeros(max(T - 1, 0), dtype=int)
    for k in range(T - 1):
        alive = ~failed
        ya = y[alive]
        coarse = run(ya, k, n)
        for _ in range(max_halvings):
            fine = run(ya, k, 2 * n)
            ok = np.all(np.isfinite(fine), axis=1) & np.all(np.isfinite(coarse), axis=1)
            err = np.abs(fine[ok] - coarse[ok]).max() / 15 if ok.any() else 0.0
            if err <= tol:
                break
            n *= 2
            coarse = fine
        substeps[k] = 2 * n
        newly = ~np.all(np.isfinite(fine), axis=1)
        if not grid.periodic:
            newly |= np.any((fine < lo) | (fine > hi), axis=1)
        ids = np.flatnonzero(alive)
        good = ids[~newly]
        y[good] = fine[~newly]
        lost = ids[newly]
        failed[lost] = True
        f_time[lost] = times[k]
        f_point[lost] = y[lost]
        pos[k + 1] = y
        if err < tol / 64 and n > 1:
            n //= 2
    return Trajectories(times, pos, failed, f_time, f_point, substeps)


def integrate_trajectory(record: EvolutionRecord, c0: ParticleConfig, tol: float = 1e-8) -> np.ndarray:
    """Configurations at each snapshot time for one start, shape ``(T, N, d)``."""
    tr = transport(record, c0.flat()[None], tol)
    if tr.failed[0]:
        raise TrajectoryFailure(
            f"trajectory entered the node mask at t = {tr.failure_times[0]:.6g} "
            f"near {np.round(tr.failure_points[0], 6).tolist()}",
            float(tr.failure_times[0]),
            tr.failure_points[0],
        )
    return tr.positions[:, 0].reshape(len(tr.times), c0.N, c0.d)


@dataclass(frozen=True)
class EquivarianceResult:
    times: np.ndarray
    l1: np.ndarray
    failure_fraction: float
    bandwidth: np.ndarray
    samples: int


def cloud_density(points: np.ndarray, grid: ConfigGrid, bandwidth=None) -> tuple[np.ndarray, np.ndarray]:
    """Exchange-symmetric KDE of unlabelled configurations (orbit-expanded)."""
    pts = orbit_expand(points, grid.n_particles, grid.dim)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(pts, grid.n_particles, grid.dim)
    return kde_grid(pts, grid, bandwidth), np.asarray(bandwidth)


def equivariance_test(
    record: EvolutionRecord,
    M: int,
    seed: int = 0,
    every: int = 1,
    tol: float = 1e-8,
    max_failure: float = 0.01,
) -> EquivarianceResult:
    """Sample ``|Psi(0)|^2``, transport, and compare the cloud KDE with ``|Psi(t)|^2`` in L1."""
    if M < 1000:
        raise ValueError("equivariance test needs at least 1000 samples")
    grid = record.grid
    rng = np.random.default_rng(seed)
    rho0 = np.abs(record.snapshots[0].amplitudes) ** 2
    starts = draw_configs(rho0, grid, M, rng)
    tr = transport(record, starts, tol)
    if tr.failure_fraction > max_failure:
        raise ExcessiveFailures(f"{tr.failure_fraction:.2%} of trajectories failed (limit {max_failure:.0%})")
    keep = ~tr.failed
    idx = list(range(0, len(tr.times), every))
    bw = None
    l1 = []
    for k in idx:
        est, bw_k = cloud_density(tr.positions[k][keep], grid, bw)
        bw = bw_k if bw is None else bw
        rho = np.abs(record.snapshots[k].amplitudes) ** 2
        rho = rho / (rho.sum() * grid.cell_volume)
        l1.append(l1_distance(est, rho, grid))
    return EquivarianceResult(tr.times[idx], np.array(l1), tr.failure_fraction, bw, M)


def disagreement_report(psi: WaveField, state_id: str, s: UnorderedParticleSet | None = None, pv=None) -> dict:
    """JSON-ready diagnostics ``{state_id, residual, argmax_point, per_mapping_velocities}``."""
    pv = _polar(psi, pv)
    res = consistency_residual(psi, pv)
    per_mapping = None
    point = s
    if point is None and res.argmax_point is not None:
        point = UnorderedParticleSet(np.reshape(res.argmax_point, (psi.grid.n_particles, psi.grid.dim)))
    if point is not None:
        try:
            per_mapping = unlinked_velocity(psi, point, pv).per_mapping.tolist()
        except NodeError:
            per_mapping = None
    return {
        "state_id": state_id,
        "residual": res.residual,
        "argmax_point": None if res.argmax_point is None else list(res.argmax_point),
        "per_mapping_velocities": per_mapping,
    }


def mischief_search(record: EvolutionRecord, starts: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Track unlinked-velocity disagreement along trajectories of an asymmetric state.

    Returns ``(T, M)`` disagreements (NaN after a trajectory fails). This is
    a search harness: it reports what it sees and asserts nothing.
    """
    tr = transport(record, starts, tol)
    grid = record.grid
    out = np.full((len(tr.times), starts.shape[0]), np.nan)
    for k, psi in enumerate(record.snapshots):
        pv = polar(psi)
        for m in range(starts.shape[0]):
            if tr.failed[m] and tr.failure_times[m] <= tr.times[k]:
                continue
            s = UnorderedParticleSet(tr.positions[k, m].reshape(grid.n_particles, grid.dim))
            try:
                out[k, m] = unlinked_velocity(psi, s, pv, record.mass, record.hbar).disagreement
            except NodeError:
                pass
    return out
