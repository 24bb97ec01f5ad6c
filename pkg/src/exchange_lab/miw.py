"""Many-worlds ensembles: label-free worlds, coarse-grained flows, the quantum force
law, ensemble evolution and wave-function reconstruction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components, minimum_spanning_tree

from . import numerics
from .configspace import ConfigGrid
from .dynamics import MaskedRegionError, Potential
from .paths import PathPolyline, line_integral
from .sampling import (
    draw_configs,
    exact_symmetrize,
    kde_grid,
    l1_distance,
    orbit_expand,
    sharpen,
    silverman_bandwidth,
)
from .wavefield import WaveField

DEFAULT_FLOW_REL = 1e-6
LATTICE_CLOSURE_TOL = 5e-2
# The log-density force stays finite far below the flow mask, so worlds in
# the KDE tails keep moving instead of freezing.
FORCE_FLOOR_REL = 1e-12
FORCE_BANDWIDTH_SCALE = 2.0


class QuantizationViolation(ValueError):
    """No single-valued phase exists: a loop integral is off the lattice ``2 pi Z``."""

    def __init__(self, message, deviation=None, loop=None):
        super().__init__(message)
        self.deviation = deviation
        self.loop = loop


class EnsembleFailure(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True, eq=False)
class World:
    """Unordered (position, velocity) pairs, shape ``(N, d)`` each, kept in canonical order."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        p = np.array(self.positions, dtype=float)
        v = np.array(self.velocities, dtype=float)
        if p.ndim == 1:
            p, v = p[:, None], v[:, None]
        order = np.lexsort(tuple(np.concatenate([p, v], axis=1).T[::-1]))
        p, v = p[order], v[order]
        for a in (p, v):
            a.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "velocities", v)

    def __eq__(self, other):
        if not isinstance(other, World):
            return NotImplemented
        return np.array_equal(self.positions, other.positions) and np.array_equal(self.velocities, other.velocities)

    def __hash__(self):
        return hash((self.positions.tobytes(), self.velocities.tobytes()))


def _canonicalize_rows(pos: np.ndarray, vel: np.ndarray, N: int, d: int):
    """Sort the particles inside each world (rows of flat configs) lexicographically."""
    M = pos.shape[0]
    P = pos.reshape(M, N, d)
    Vv = vel.reshape(M, N, d)
    keys = [P[:, :, c] for c in reversed(range(d))]
    order = np.lexsort(keys, axis=-1)
    idx = np.arange(M)[:, None]
    return P[idx, order].reshape(M, -1), Vv[idx, order].reshape(M, -1)


@dataclass(frozen=True, eq=False)
class WorldEnsemble:
    """M worlds of N particles in d dimensions, stored as arrays ``(M, N d)``.

    Row order inside a world is canonical and carries no meaning.
    """

    positions: np.ndarray
    velocities: np.ndarray
    n_particles: int
    dim: int
    mass: float = 1.0

    def __post_init__(self):
        p = np.array(self.positions, dtype=float)
        v = np.array(self.velocities, dtype=float)
        D = self.n_particles * self.dim
        if p.ndim != 2 or p.shape[1] != D or v.shape != p.shape:
            raise ValueError(f"ensemble arrays must be (M, {D})")
        p, v = _canonicalize_rows(p, v, self.n_particles, self.dim)
        for a in (p, v):
            a.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "velocities", v)

    @property
    def M(self) -> int:
        return self.positions.shape[0]

    def world(self, k: int) -> World:
        N, d = self.n_particles, self.dim
        return World(self.positions[k].reshape(N, d), self.velocities[k].reshape(N, d))

    def worlds(self) -> list[World]:
        return [self.world(k) for k in range(self.M)]

    def jsonl_records(self):
        N, d = self.n_particles, self.dim
        for k in range(self.M):
            yield {
                "particles": [
                    [self.positions[k].reshape(N, d)[i].tolist(), self.velocities[k].reshape(N, d)[i].tolist()]
                    for i in range(N)
                ],
                "mass": self.mass,
                "note": "particle order within a world carries no meaning",
            }


def sample_ensemble(psi: WaveField, M: int, seed: int = 0, mass: float = 1.0, hbar: float = 1.0) -> WorldEnsemble:
    """Worlds with positions drawn from ``|Psi|^2`` and velocities ``(hbar/m) grad theta``.

    Draws landing where the phase gradient is undefined are redrawn; more
    than ``100 M`` attempts is an error.
    """
    grid = psi.grid
    rng = np.random.default_rng(seed)
    rho = np.abs(psi.amplitudes) ** 2
    pts = draw_configs(rho, grid, M, rng)
    grad, mag = psi.phase_gradient_at(pts)
    thresh = 1e-8 * psi.max_magnitude
    ok = np.all(np.isfinite(grad), axis=1) & (mag > thresh)
    attempts = M
    while not ok.all():
        bad = np.flatnonzero(~ok)
        attempts += bad.size
        if attempts > 100 * M:
            raise RuntimeError("too many draws landed in the node mask")
        pts[bad] = draw_configs(rho, grid, bad.size, rng, stratified=False)
        g2, m2 = psi.phase_gradient_at(pts[bad])
        grad[bad] = g2
        ok[bad] = np.all(np.isfinite(g2), axis=1) & (m2 > thresh)
    return WorldEnsemble(pts, hbar / mass * grad, grid.n_particles, grid.dim, mass)


@dataclass(frozen=True, eq=False)
class CoarseGrainedFlow:
    """Density ``rho`` (integrating to 1) and momentum density ``J = rho v`` per slot axis.

    Velocities are recovered as ``J / rho``; interpolating the two smooth
    fields separately keeps point velocities well behaved near nodes.
    """

    grid: ConfigGrid
    rho: np.ndarray
    momentum: np.ndarray
    mass: float = 1.0
    hbar: float = 1.0
    bandwidth: np.ndarray | None = None
    eps_rel: float = DEFAULT_FLOW_REL
    time: float = 0.0
    source: object | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("rho", "momentum"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def mask(self) -> np.ndarray:
        return self.rho <= self.eps_rel * self.rho.max()

    @property
    def node_threshold(self) -> float:
        return math.sqrt(self.eps_rel * self.rho.max())

    def velocity(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            v = self.momentum / self.rho[None]
        v[:, self.mask] = np.nan
        return v

    def velocity_at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Velocities ``(M, D)`` and densities ``(M,)`` at off-grid configurations."""
        vals = numerics.interpolate(
            np.concatenate([self.rho[None], self.momentum]), self.grid.axes, points, self.grid.periodic
        )
        rho = vals[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            v = (vals[1:] / rho).T
        v[~(rho > self.eps_rel * self.rho.max())] = np.nan
        return v, rho

    def phase_gradient_at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(m / hbar) v`` and ``sqrt(rho)`` at points.

        A flow taken from a wave field evaluates its velocity through the
        field itself, which stays accurate right next to nodes.
        """
        if self.source is not None:
            g, mag = self.source.phase_gradient_at(points)
            return g, mag / self.source.norm
        v, rho = self.velocity_at(points)
        return self.mass / self.hbar * v, np.sqrt(np.maximum(rho, 0.0))

    def scaled(self, factor: float) -> "CoarseGrainedFlow":
        """Same density with every velocity multiplied by ``factor``."""
        return CoarseGrainedFlow(
            self.grid, self.rho, self.momentum * factor, self.mass, self.hbar, self.bandwidth, self.eps_rel, self.time,
            None if self.source is None else _ScaledSource(self.source, factor),
        )

    @property
    def total(self) -> float:
        return float(self.rho.sum() * self.grid.cell_volume)


def flow_from_wavefield(psi: WaveField, mass: float = 1.0, hbar: float = 1.0, time: float = 0.0) -> CoarseGrainedFlow:
    """Exact fields: ``rho = |Psi|^2`` and ``J = (hbar/m) Im(conj(Psi) grad Psi)``, normalised.

    Periodic grids use spectral derivatives, which stay accurate far into
    the Gaussian tails where the reconstruction still integrates.
    """
    n2 = psi.norm**2
    a = psi.amplitudes
    grid = psi.grid
    rho = np.abs(a) ** 2 / n2
    J = hbar / mass * np.imag(np.conj(a)[None] * psi._smooth_gradient) / n2
    return CoarseGrainedFlow(psi.grid, rho, J, mass, hbar, None, DEFAULT_FLOW_REL, time, psi)


class _ScaledSource:
    """A wave field whose phase gradient is read as multiplied by a constant."""

    def __init__(self, psi, factor):
        self.psi, self.factor = psi, factor
        self.norm = psi.norm

    def phase_gradient_at(self, points):
        g, mag = self.psi.phase_gradient_at(points)
        return self.factor * g, mag


def build_flow(e: WorldEnsemble, grid: ConfigGrid, bandwidth=None, time: float = 0.0, with_momentum: bool = True):
    """Orbit-expanded Gaussian KDE of the worlds with Nadaraya-Watson velocities.

    Every world contributes all ``N!`` orderings, velocities permuted with the
    positions. The result is made exactly exchange-symmetric (density) and
    covariant (velocities) by an order-independent average over the group.
    """
    if e.M < 100:
        raise ValueError("build_flow needs at least 100 worlds")
    if (grid.n_particles, grid.dim) != (e.n_particles, e.dim):
        raise ValueError("ensemble and grid disagree on particle count or dimension")
    pts, vel = orbit_expand(e.positions, e.n_particles, e.dim, e.velocities)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(pts, e.n_particles, e.dim)
    bw = np.broadcast_to(np.asarray(bandwidth, dtype=float), (grid.D,)).copy()
    if np.any(bw <= 0):
        raise ValueError("bandwidth must be positive")
    if with_momentum:
        sums = kde_grid(pts, grid, bw, np.concatenate([np.ones((pts.shape[0], 1)), vel], axis=1))
        rho, J = exact_symmetrize(sums[0], grid, sums[1:])
    else:
        rho = exact_symmetrize(kde_grid(pts, grid, bw), grid)
        J = np.zeros((grid.D,) + grid.shape)
    return CoarseGrainedFlow(grid, rho, J, e.mass, 1.0, bw, DEFAULT_FLOW_REL, time)


def quantum_force(rho: np.ndarray, potential: Potential, mass: float = 1.0, hbar: float = 1.0, t: float = 0.0,
                  eps_rel: float = FORCE_FLOOR_REL) -> np.ndarray:
    """Acceleration per slot axis, ``(D, *grid)``, NaN where undefined.

    The quantum potential ``-(hbar^2/2m) sum_i lap_i sqrt(rho) / sqrt(rho)``
    is evaluated through ``ln rho`` as ``-(hbar^2/2m)(lap ln rho / 2 +
    |grad ln rho|^2 / 4)``, which avoids dividing by a vanishing amplitude.
    """
    grid = potential.grid
    rho = np.asarray(rho, dtype=float)
    mask = ~(rho > eps_rel * rho.max())
    if mask.all():
        raise MaskedRegionError("density is masked everywhere")
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.where(mask, np.nan, np.log(np.where(mask, 1.0, rho)))
    h = grid.spacing
    Q = np.zeros(grid.shape)
    for a in range(grid.D):
        g = numerics.d1(L, a, h[a], periodic=False)
        Q += 0.5 * numerics.d2(L, a, h[a], periodic=False) + 0.25 * g * g
    U = -(hbar**2) / (2 * mass) * Q + potential.at(t)
    return np.stack([-numerics.d1(U, a, h[a], periodic=False) / mass for a in range(grid.D)])


@dataclass(frozen=True, eq=False)
class EnsembleRun:
    times: np.ndarray
    centroids: np.ndarray
    positions: np.ndarray | None
    frozen: np.ndarray
    flows: list = field(repr=False)
    final: WorldEnsemble | None = None
    bandwidth: np.ndarray | None = None

    @property
    def frozen_fraction(self) -> float:
        return float(self.frozen.mean())


def evolve_ensemble(
    e: WorldEnsemble,
    potential: Potential,
    dt: float,
    steps: int,
    rebuild_every: int = 1,
    bandwidth=None,
    keep_flows: bool = False,
    keep_positions: bool = False,
    record_every: int = 1,
    max_frozen: float = 0.01,
    bandwidth_scale: float = FORCE_BANDWIDTH_SCALE,
    sharpen_density: bool = True,
) -> EnsembleRun:
    """Kick-drift-kick leapfrog under the quantum force of the coarse-grained density.

    The bandwidth is fixed from the initial ensemble: Silverman times
    ``bandwidth_scale`` unless given. The force needs third derivatives of
    ``ln rho``, so the default oversmooths and removes the resulting
    broadening bias by data sharpening. Worlds whose force is undefined
    freeze in place and are flagged.
    """
    grid = potential.grid
    N, d, m = e.n_particles, e.dim, e.mass
    x = e.positions.copy()
    v = e.velocities.copy()
    if bandwidth is None:
        bandwidth = bandwidth_scale * silverman_bandwidth(orbit_expand(x, N, d), N, d)
    bw = np.broadcast_to(np.asarray(bandwidth, float), (grid.D,)).copy()
    frozen = np.zeros(e.M, bool)

    def density(xx):
        pts = orbit_expand(xx, N, d)
        rho = exact_symmetrize(kde_grid(pts, grid, bw), grid)
        if sharpen_density:
            rho = exact_symmetrize(kde_grid(sharpen(pts, grid, bw, rho), grid, bw), grid)
        return rho

    def accel(rho, xx, t):
        a_field = quantum_force(rho, potential, m, t=t)
        a = numerics.interpolate(a_field, grid.axes, xx, grid.periodic).T
        return a

    def snapshot_flow(xx, vv, t):
        return build_flow(WorldEnsemble(xx, vv, N, d, m), grid, bw, t)

    rho = density(x)
    a = accel(rho, x, 0.0)
    frozen |= ~np.all(np.isfinite(a), axis=1)
    times, cents, poss, flows = [0.0], [x.mean(axis=0)], [], []
    if keep_positions:
        poss.append(x.copy())
    if keep_flows:
        flows.append(snapshot_flow(x, v, 0.0))
    for n in range(1, steps + 1):
        t = n * dt
        live = ~frozen
        v[live] += 0.5 * dt * a[live]
        x[live] += dt * v[live]
        x, v = _canonicalize_rows(x, v, N, d)
        if n % rebuild_every == 0:
            rho = density(x)
        a = accel(rho, x, t)
        newly = live & ~np.all(np.isfinite(a), axis=1)
        frozen |= newly
        v[frozen] = np.where(np.isfinite(v[frozen]), v[frozen], 0.0)
        live = ~frozen
        v[live] += 0.5 * dt * a[live]
        if frozen.mean() > max_frozen:
            partial = EnsembleRun(np.array(times), np.array(cents), None, frozen, flows, None, bw)
            raise EnsembleFailure(f"{frozen.mean():.2%} of worlds froze by t = {t:.4g}", partial)
        if n % record_every == 0:
            times.append(t)
            cents.append(x.mean(axis=0))
            if keep_positions:
                poss.append(x.copy())
            if keep_flows:
                flows.append(snapshot_flow(x, v, t))
    final = WorldEnsemble(x, v, N, d, m)
    return EnsembleRun(
        np.array(times), np.array(cents), np.array(poss) if keep_positions else None, frozen, flows, final, bw
    )


@dataclass(frozen=True)
class ContinuityResidual:
    times: np.ndarray
    l1: np.ndarray

    def per_period(self, period: float) -> float:
        """Time-averaged L1 mismatch times the period (mismatch accumulated per period)."""
        return float(np.mean(self.l1) * period) if self.l1.size else 0.0


def continuity_residual(flows: list[CoarseGrainedFlow]) -> ContinuityResidual:
    """L1 norm of ``d rho/dt + sum_i div_i J_i`` by centred differences between flows."""
    if len(flows) < 3:
        return ContinuityResidual(np.array([]), np.array([]))
    grid = flows[0].grid
    h = grid.spacing
    ts, out = [], []
    for k in range(1, len(flows) - 1):
        f0, f1, f2 = flows[k - 1], flows[k], flows[k + 1]
        drho = (f2.rho - f0.rho) / (f2.time - f0.time)
        div = sum(numerics.d1(f1.momentum[a], a, h[a], True) for a in range(grid.D))
        ts.append(f1.time)
        out.append(l1_distance(drho, -div, grid))
    return ContinuityResidual(np.array(ts), np.array(out))


@dataclass(frozen=True)
class QuantizationResult:
    integral: float
    n: int
    deviation: float


def quantization_check(flow: CoarseGrainedFlow, loop: PathPolyline, tol: float = 1e-4) -> QuantizationResult:
    """``sum_i m v_i . dl_i`` around a full-space loop, in units of ``h = 2 pi hbar``.

    ``deviation`` is the distance to the nearest integer, also in units of h.
    """
    if not loop.closed_in_full:
        raise ValueError("quantization_check needs a loop closed in full configuration space")
    h_planck = 2 * np.pi * flow.hbar
    val = flow.hbar * line_integral(flow, loop, tol) / h_planck
    n = int(round(val))
    return QuantizationResult(val, n, abs(val - n))


@dataclass(frozen=True, eq=False)
class Reconstruction:
    psi: WaveField
    max_closure_deviation: float
    components: int
    disconnected: bool
    anchors: list


def _edge_increments(flow: "CoarseGrainedFlow", a: int) -> np.ndarray:
    """Phase increment from each grid point to its +1 neighbour along axis ``a``.

    Trapezoid on the grid velocities with the Euler-Maclaurin end correction;
    the plain trapezoid is used where the derivative is unavailable.
    """
    grid = flow.grid
    h = grid.spacing[a]
    va = flow.velocity()[a]
    dv = numerics.d1(va, a, h, grid.periodic)
    corr = -(h * h / 12) * (np.roll(dv, -1, axis=a) - dv)
    corr = np.where(np.isfinite(corr), corr, 0.0)
    out = flow.mass / flow.hbar * (0.5 * h * (va + np.roll(va, -1, axis=a)) + corr)
    if not grid.periodic:
        sl = [slice(None)] * grid.D
        sl[a] = -1
        out[tuple(sl)] = np.nan
    return out


def reconstruct_wavefunction(
    flow: CoarseGrainedFlow,
    anchor: tuple | None = None,
    closure_tol: float = LATTICE_CLOSURE_TOL,
    loops: list[PathPolyline] | None = None,
    loop_tol: float = 1e-2,
) -> Reconstruction:
    """Single-valued ``Psi = sqrt(rho) exp(i theta)`` from a flow, up to global phase.

    ``theta`` is integrated along a spanning tree of the unmasked grid graph
    that prefers dense edges (a minimum spanning tree on inverse density). Every non-tree edge closes a loop whose phase must
    lie in ``2 pi Z`` within ``closure_tol`` (in units of h); otherwise
    ``QuantizationViolation`` names the offending loop. The lattice
    quadrature is coarse next to vortex lines, so the strict check belongs
    to ``loops``: each is integrated adaptively and must be within
    ``loop_tol`` of a multiple of h. Disconnected regions
    are reconstructed independently, each anchored at its densest point.
    """
    grid = flow.grid
    for loop in loops or []:
        q = quantization_check(flow, loop)
        if q.deviation >= loop_tol:
            raise QuantizationViolation(
                f"loop {loop.path_id!r} integrates to {q.integral:.4f} h, {q.deviation:.3g} h from {q.n} h",
                q.deviation,
                loop,
            )
    keep = ~flow.mask
    if anchor is not None and not keep[tuple(anchor)]:
        raise ValueError("anchor lies in the masked region")
    ids = -np.ones(grid.shape, dtype=np.int64)
    nodes = np.flatnonzero(keep.ravel())
    ids.flat[nodes] = np.arange(nodes.size)
    src, dst, inc = [], [], []
    for a in range(grid.D):
        I = _edge_increments(flow, a)
        nb = np.roll(ids, -1, axis=a)
        ok = (ids >= 0) & (nb >= 0) & np.isfinite(I)
        if not grid.periodic:
            last = [slice(None)] * grid.D
            last[a] = -1
            ok[tuple(last)] = False
        src.append(ids[ok])
        dst.append(nb[ok])
        inc.append(I[ok])
    src, dst, inc = np.concatenate(src), np.concatenate(dst), np.concatenate(inc)
    n = nodes.size
    rho_flat = flow.rho.ravel()[nodes]
    # densest-first spanning tree: tree paths stay away from nodes and tails
    weight = 2.0 - np.minimum(rho_flat[src], rho_flat[dst]) / rho_flat.max()
    graph = coo_matrix((weight, (src, dst)), shape=(n, n)).tocsr()
    ncomp, labels = connected_components(graph, directed=False)
    tree = minimum_spanning_tree(graph)

    parent = np.full(n, -1, dtype=np.int64)
    parent_inc = np.zeros(n)
    anchors = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        if anchor is not None and labels[ids[tuple(anchor)]] == c:
            root = int(ids[tuple(anchor)])
        else:
            root = int(members[np.argmax(rho_flat[members])])
        anchors.append(tuple(int(i) for i in np.unravel_index(nodes[root], grid.shape)))
        order, pred = breadth_first_order(tree, root, directed=False, return_predecessors=True)
        kids = order[1:]
        parent[kids] = pred[kids]
        parent[root] = root
    # signed increment along each tree edge: parent -> child
    key = src * n + dst
    sorter = np.argsort(key)
    ksorted = key[sorter]

    def lookup(p, q):
        k = p * n + q
        pos = np.searchsorted(ksorted, k)
        pos = np.minimum(pos, ksorted.size - 1)
        hit = ksorted[pos] == k
        return hit, inc[sorter[pos]]

    nonroot = np.flatnonzero(parent != np.arange(n))
    p, q = parent[nonroot], nonroot
    hit_f, val_f = lookup(p, q)
    hit_b, val_b = lookup(q, p)
    parent_inc[nonroot] = np.where(hit_f, val_f, -val_b)
    # accumulate increments to the root by pointer doubling; acc[root] = 0
    theta = parent_inc.copy()
    ptr = parent.copy()
    while not np.all(ptr[ptr] == ptr):
        theta = theta + theta[ptr]
        ptr = ptr[ptr]

    resid = theta[dst] - theta[src] - inc
    dev = np.abs(resid - 2 * np.pi * np.round(resid / (2 * np.pi))) / (2 * np.pi)
    worst = float(dev.max()) if dev.size else 0.0
    if worst > closure_tol:
        k = int(np.argmax(dev))
        loop = _fundamental_loop(int(src[k]), int(dst[k]), parent)
        pts = [tuple(int(i) for i in np.unravel_index(nodes[j], grid.shape)) for j in loop]
        raise QuantizationViolation(
            f"loop through {len(pts)} grid points has phase off 2 pi Z by {worst:.3g} h "
            f"(edge {pts[0]} -> {pts[-1]})",
            worst,
            pts,
        )
    amp = np.zeros(grid.shape, dtype=complex)
    amp.flat[nodes] = np.sqrt(rho_flat) * np.exp(1j * theta)
    return Reconstruction(WaveField(grid, amp), worst, ncomp, ncomp > 1, anchors)


def _fundamental_loop(u: int, w: int, parent: np.ndarray) -> list[int]:
    """Tree path ``u -> lca -> w``; together with edge ``w -> u`` it is a closed loop."""

    def chain(x):
        out = [x]
        while parent[x] != x:
            x = int(parent[x])
            out.append(x)
        return out

    cu, cw = chain(u), chain(w)
    sw = set(cw)
    lca = next(x for x in cu if x in sw)
    return cu[: cu.index(lca) + 1] + cw[: cw.index(lca)][::-1]

