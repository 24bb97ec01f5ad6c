"""Reduced configuration space: branched fields, exchange phases, the coincidence
node and the two-dimensional anyon family."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import numerics
from .configspace import ConfigGrid, Permutation, canonical_order
from .miw import CoarseGrainedFlow
from .paths import MaskedPathError, PathPolyline, line_integral, relative_loop
from .wavefield import (
    DEFAULT_NODE_REL,
    SymmetryClass,
    WaveField,
    classify_symmetry,
    permute_array,
    phase_gradient_from,
)

TWO_PI = 2 * np.pi


class NonLiftableError(ValueError):
    """The doubled path does not integrate to a multiple of 2 pi."""


class AnyonDimensionError(ValueError):
    pass


class ExchangeKind(str, enum.Enum):
    BOSONIC = "bosonic"
    FERMIONIC = "fermionic"
    ANYONIC = "anyonic"


@dataclass(frozen=True)
class ExchangePhase:
    alpha: float
    raw_integral: float
    doubled_integral: float
    kind: ExchangeKind
    path_id: str = ""
    homotopy_witnesses: tuple = ()

    def to_dict(self) -> dict:
        return {
            "path_id": self.path_id,
            "alpha": self.alpha,
            "doubled_integral": self.doubled_integral,
            "classification": self.kind.value,
            "homotopy_witnesses": list(self.homotopy_witnesses),
        }


def _wrap(a: float) -> float:
    return float(np.mod(a, TWO_PI))


def _kind(alpha: float, tol: float) -> ExchangeKind:
    if min(alpha, TWO_PI - alpha) < tol:
        return ExchangeKind.BOSONIC
    if abs(alpha - np.pi) < tol:
        return ExchangeKind.FERMIONIC
    return ExchangeKind.ANYONIC


def half_loop_phase(
    source,
    path: PathPolyline,
    tol: float = 1e-3,
    require_liftable: bool = True,
    integral_tol: float = 1e-5,
) -> ExchangePhase:
    """Exchange phase from the phase-gradient integral along a permutation-connecting path.

    ``source`` is a ``WaveField``, a ``CoarseGrainedFlow`` or a
    ``MultiValuedField``. The path must end at a permuted image of its start.
    Its doubled version (the path followed by its permuted image) is
    integrated too; unless that is within ``tol`` of ``2 pi n`` the field is
    not liftable and ``NonLiftableError`` is raised (when ``require_liftable``).
    """
    if not path.closed_in_reduced or path.closed_in_full:
        raise ValueError("half_loop_phase needs a path closed in reduced space and open in full space")
    raw = line_integral(source, path, integral_tol)
    doubled = line_integral(source, path.doubled(), integral_tol)
    off = abs(doubled - TWO_PI * round(doubled / TWO_PI))
    if require_liftable and off > tol:
        raise NonLiftableError(f"doubled path integrates to {doubled:.6f}, {off:.3g} from 2 pi Z")
    alpha = _wrap(raw)
    return ExchangePhase(alpha, raw, doubled, _kind(alpha, tol), path.path_id)


def homotopy_phases(source, paths: list[PathPolyline], tol: float = 1e-3, require_liftable: bool = True):
    """Phases along several paths of one class, with their spread (on the circle)."""
    phases = [half_loop_phase(source, p, tol, require_liftable) for p in paths]
    alphas = np.array([ph.alpha for ph in phases])
    ref = alphas[0]
    spread = float(np.max(np.abs(np.angle(np.exp(1j * (alphas - ref))))))
    first = phases[0]
    summary = ExchangePhase(
        first.alpha, first.raw_integral, first.doubled_integral, first.kind, first.path_id, tuple(map(float, alphas))
    )
    return summary, spread


@dataclass(frozen=True)
class DichotomyVerdict:
    kind: ExchangeKind
    distance: float
    alpha: float

    @property
    def definite(self) -> bool:
        return self.kind is not ExchangeKind.ANYONIC


def dichotomy_check(phase: ExchangePhase | float, tol: float = 1e-3) -> DichotomyVerdict:
    """Bosonic or fermionic if ``alpha`` is within ``tol`` of 0, pi or 2 pi."""
    alpha = _wrap(phase.alpha if isinstance(phase, ExchangePhase) else phase)
    dist = min(alpha, abs(alpha - np.pi), TWO_PI - alpha)
    return DichotomyVerdict(_kind(alpha, tol), float(dist), alpha)


@dataclass(frozen=True, eq=False)
class MultiValuedField:
    """Two-branch field over the reduced space of a particle pair.

    Branches are stored on the full grid but only read on the canonical half
    (``canonical_mask``): branch 0 gives the value at a canonical point,
    branch 1 the value at its exchanged image. Each branch array is a smooth
    continuation across the seam so derivatives near the seam are clean.
    Branches that are discontinuous far from the canonical half (a phase cut)
    should come with exact ``gradients`` ``(2, D, *grid)``; otherwise spectral
    derivatives are used.
    """

    grid: ConfigGrid
    branches: np.ndarray
    canonical_mask: np.ndarray
    rule: str = "lexicographic"
    gradients: np.ndarray | None = None

    def __post_init__(self):
        if self.grid.n_particles != 2:
            raise ValueError("branched fields are implemented for two particles")
        b = np.array(self.branches, dtype=complex)
        if b.shape != (2,) + self.grid.shape:
            raise ValueError("need two branches over the grid")
        b.setflags(write=False)
        object.__setattr__(self, "branches", b)
        if self.gradients is not None:
            g = np.array(self.gradients, dtype=complex)
            if g.shape != (2, self.grid.D) + self.grid.shape:
                raise ValueError("branch gradients must be (2, D, *grid)")
            g.setflags(write=False)
            object.__setattr__(self, "gradients", g)

    @cached_property
    def _stacked(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.concatenate([self.branches[k][None], self._branch_gradient(k)]) for k in (0, 1))

    def _branch_gradient(self, k: int) -> np.ndarray:
        if self.gradients is not None:
            return self.gradients[k]
        return WaveField(self.grid, self.branches[k])._smooth_gradient

    @cached_property
    def _swap(self) -> Permutation:
        return Permutation.transposition(2, 0, 1)

    def branch(self, k: int) -> WaveField:
        return WaveField(self.grid, self.branches[k])

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.branches)

    def branch_phase_gradients(self) -> np.ndarray:
        """``(2, D, *grid)`` phase gradients of each branch continuation."""
        out = []
        for k, b in enumerate(self.branches):
            g = self._branch_gradient(k)
            with np.errstate(invalid="ignore", divide="ignore"):
                out.append(np.imag(np.conj(b)[None] * g) / np.abs(b)[None] ** 2)
        return np.stack(out)

    def unreduce(self) -> WaveField:
        """Glue the branches into a full-space field: branch 1 read at the exchanged point."""
        b1_at_image = permute_array(self.branches[1], self.grid, self._swap)
        return WaveField(self.grid, np.where(self.canonical_mask, self.branches[0], b1_at_image))

    @property
    def max_magnitude(self) -> float:
        return float(np.abs(self.branches[0][self.canonical_mask]).max())

    @property
    def node_threshold(self) -> float:
        return DEFAULT_NODE_REL * self.max_magnitude

    def phase_gradient_at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Single-valued phase gradient on reduced space, read at full-space points.

        Canonical points use branch 0; other points use branch 1 at the
        exchanged image with the two particle blocks swapped back.
        """
        points = np.atleast_2d(points)
        d = self.grid.dim
        canon = np.array([_is_canonical(p, 2, d) for p in points])
        swapped = np.concatenate([points[:, d:], points[:, :d]], axis=1)
        grad = np.empty_like(points)
        mag = np.empty(points.shape[0])
        if canon.any():
            g, m = phase_gradient_from(self.grid, self._stacked[0], points[canon])
            grad[canon], mag[canon] = g, m
        if (~canon).any():
            g, m = phase_gradient_from(self.grid, self._stacked[1], swapped[~canon])
            grad[~canon] = np.concatenate([g[:, d:], g[:, :d]], axis=1)
            mag[~canon] = m
        return grad, mag

    def lift(self, tol: float = 1e-6) -> "LiftResult":
        """Try to glue into a single-valued field; the verdict compares values across the seam.

        At each seam edge (a canonical point next to a non-canonical one) the
        glued value is compared with the continuation of branch 0. A mismatch
        in phase beyond ``tol`` means no single-valued lift exists.
        """
        glued = self.unreduce().amplitudes
        b0 = self.branches[0]
        thresh = self.node_threshold
        worst = 0.0
        for a in range(self.grid.D):
            for shift in (1, -1):
                nb_canon = np.roll(self.canonical_mask, shift, axis=a)
                seam = nb_canon & ~self.canonical_mask
                seam &= (np.abs(glued) > thresh) & (np.abs(b0) > thresh)
                if not self.grid.periodic:
                    sl = [slice(None)] * self.grid.D
                    sl[a] = 0 if shift == 1 else -1
                    seam[tuple(sl)] = False
                if seam.any():
                    mis = np.abs(np.angle(glued[seam] / b0[seam]))
                    worst = max(worst, float(mis.max()))
        return LiftResult(worst < tol, worst, WaveField(self.grid, glued))


def _is_canonical(flat: np.ndarray, N: int, d: int) -> bool:
    pos = flat.reshape(N, d)
    return bool(np.all(canonical_order(pos) == np.arange(N)))


@dataclass(frozen=True, eq=False)
class LiftResult:
    liftable: bool
    seam_mismatch: float
    psi: WaveField


def reduce_field(psi: WaveField) -> MultiValuedField:
    """Split a two-particle field into canonical-side and exchanged-side branches (lossless)."""
    grid = psi.grid
    if grid.n_particles != 2:
        raise ValueError("reduce_field handles N = 2 only")
    swap = Permutation.transposition(2, 0, 1)
    b1 = permute_array(psi.amplitudes, grid, swap)
    return MultiValuedField(grid, np.stack([psi.amplitudes, b1]), grid.canonical_mask())


def branch_gradient_agreement(mv: MultiValuedField) -> float:
    """Largest difference of the two branch phase gradients on the unmasked canonical half."""
    g = mv.branch_phase_gradients()
    m = mv.magnitudes()
    ok = mv.canonical_mask & (m[0] > 1e-3 * m.max()) & (m[1] > 1e-3 * m.max())
    if not ok.any():
        return 0.0
    return float(np.abs(g[0][:, ok] - g[1][:, ok]).max())


@dataclass(frozen=True)
class NodeCheck:
    max_abs: float
    ratio: float
    applicable: bool
    symmetry: SymmetryClass

    @property
    def passed(self) -> bool:
        return self.ratio < 1e-10


def coincidence_node_check(psi: WaveField, samples: int = 17, seed: int = 0) -> NodeCheck:
    """Largest interpolated ``|Psi|`` on the coincidence sets ``x_i = x_j``, relative to ``max |Psi|``.

    Points are off-lattice (shifted by a fraction of a cell) and evaluated by
    multilinear interpolation. For N > 2 the spectator particles are placed
    at random grid-interior positions.
    """
    grid = psi.grid
    rng = np.random.default_rng(seed)
    d = grid.dim
    ax = grid.spatial_axes
    pts = []
    inner = [np.linspace(a[2], a[-3], samples) + 0.37 * (a[1] - a[0]) for a in ax]
    mesh = np.stack([m.ravel() for m in np.meshgrid(*inner, indexing="ij")], axis=1)
    for i in range(grid.n_particles):
        for j in range(i + 1, grid.n_particles):
            for y in mesh:
                conf = np.empty((grid.n_particles, d))
                for k in range(grid.n_particles):
                    conf[k] = [rng.uniform(a[2], a[-3]) for a in ax]
                conf[i] = conf[j] = y
                pts.append(conf.ravel())
    vals = numerics.interpolate(psi.amplitudes, grid.axes, np.array(pts), grid.periodic, order=2)
    mx = float(np.abs(vals).max())
    cls = classify_symmetry(psi).cls
    return NodeCheck(mx, mx / psi.max_magnitude, cls is SymmetryClass.ANTISYMMETRIC, cls)


@dataclass(frozen=True)
class ShrinkStudy:
    radii: tuple
    integrals: tuple
    min_density: tuple
    masked: tuple


def shrink_loop_study(flow: CoarseGrainedFlow, radii=(1.0, 0.5, 0.25), center_cm=(0.0, 0.0), n: int = 64) -> ShrinkStudy:
    """Momentum loop integrals (units of h) and minimum density on concentric relative-space circles."""
    integrals, mins, masked = [], [], []
    for r in radii:
        loop = relative_loop(1.0, r, center_cm, n=n, path_id=f"r={r}")
        _, rho = flow.velocity_at(loop.points)
        mins.append(float(np.min(rho)))
        try:
            integrals.append(flow.hbar * line_integral(flow, loop) / (TWO_PI * flow.hbar))
            masked.append(False)
        except MaskedPathError:
            integrals.append(float("nan"))
            masked.append(True)
    return ShrinkStudy(tuple(radii), tuple(integrals), tuple(mins), tuple(masked))


def check_anyon_dimension(d: int) -> None:
    """Refuse spatial dimensions other than 2 for anyonic exchange phases."""
    if d >= 3:
        raise AnyonDimensionError(
            "anyonic phases need d = 2: for d >= 3 a doubled exchange loop can be contracted to a point "
            "without crossing coincidence, so 2 alpha must vanish mod 2 pi and only alpha = 0 or pi survive"
        )
    if d != 2:
        raise AnyonDimensionError("anyonic phases need d = 2: on a line exchange must pass through coincidence")


def anyon_construct(alpha: float, grid: ConfigGrid) -> MultiValuedField:
    """Branched pair field with exchange phase ``alpha`` per half turn around coincidence.

    ``R = |x_rel| exp(-|x_rel|^2 / 2) exp(-|x_cm|^2)`` is single valued;
    branch 0 carries phase ``(alpha / pi) * angle(x_rel)`` and branch 1 the
    same times ``exp(i alpha)``.
    """
    check_anyon_dimension(grid.dim)
    if grid.n_particles != 2:
        raise ValueError("the anyon construction is for a particle pair")
    x1, y1, x2, y2 = grid.mesh()
    rx, ry = x2 - x1, y2 - y1
    cx, cy = (x1 + x2) / 2, (y1 + y2) / 2
    r2 = rx**2 + ry**2
    R = np.sqrt(r2) * np.exp(-r2 / 2 - (cx**2 + cy**2))
    b0 = R * np.exp(1j * (alpha / np.pi) * np.arctan2(ry, rx))
    b1 = b0 * np.exp(1j * alpha)
    norm = np.sqrt(np.sum(np.abs(b0) ** 2) * grid.cell_volume)
    # exact gradient. With E = exp(-r^2/2 - |cm|^2), b0 = r e^{i nu phi} E and
    # grad_rel (r e^{i nu phi}) = e^{i nu phi} (cos - i nu sin, sin + i nu cos);
    # at r = 0 that is direction dependent and its angular mean is used.
    # Slot derivatives: d/dx1 = -d/drx + d/dcx / 2, d/dx2 = d/drx + d/dcx / 2.
    nu = alpha / np.pi
    phi = np.arctan2(ry, rx)
    r = np.sqrt(r2)
    E = np.exp(-r2 / 2 - (cx**2 + cy**2))
    w = np.exp(1j * nu * phi)
    grel = [w * (np.cos(phi) - 1j * nu * np.sin(phi)), w * (np.sin(phi) + 1j * nu * np.cos(phi))]
    ang = np.linspace(-np.pi, np.pi, 4096, endpoint=False)
    wa = np.exp(1j * nu * ang)
    at0 = [np.mean(wa * (np.cos(ang) - 1j * nu * np.sin(ang))), np.mean(wa * (np.sin(ang) + 1j * nu * np.cos(ang)))]
    grel = [np.where(r2 > 0, gr, a0) for gr, a0 in zip(grel, at0)]
    d_rel = [E * gr - b0 * rr for gr, rr in zip(grel, (rx, ry))]
    d_cm = [-2 * cx * b0, -2 * cy * b0]
    grads = np.stack([-d_rel[0] + d_cm[0] / 2, -d_rel[1] + d_cm[1] / 2, d_rel[0] + d_cm[0] / 2, d_rel[1] + d_cm[1] / 2])
    branches = np.stack([b0, b1]) / norm
    gradients = np.stack([grads, grads * np.exp(1j * alpha)]) / norm
    return MultiValuedField(grid, branches, grid.canonical_mask(), "lexicographic", gradients)


@dataclass(frozen=True)
class AnyonReport:
    alpha_target: float
    alpha_extracted: float
    doubled_integral: float
    loop_liftable: bool
    lift: bool
    seam_mismatch: float


def anyon_report(alpha: float, grid: ConfigGrid, path: PathPolyline | None = None, tol: float = 1e-3) -> AnyonReport:
    """Construct an anyonic field, extract its phase, and run the two independent lift tests."""
    mv = anyon_construct(alpha, grid)
    path = path or relative_loop(0.5, 1.0, path_id="anyon-half")
    ph = half_loop_phase(mv, path, tol, require_liftable=False)
    loop_ok = abs(ph.doubled_integral - TWO_PI * round(ph.doubled_integral / TWO_PI)) < tol
    lr = mv.lift()
    return AnyonReport(alpha, ph.alpha, ph.doubled_integral, loop_ok, lr.liftable, lr.seam_mismatch)


@dataclass(frozen=True)
class ReducedQuantization:
    integral: float
    unit: str
    n: int
    deviation: float


def reduced_quantization_check(flow, path: PathPolyline, tol: float = 1e-4) -> ReducedQuantization:
    """``m (2 v_cm . dl_cm + v_rel . dl_rel / 2)`` along a pair path, in units of h.

    Full-space loops are compared with integers, reduced-only loops with
    half-integers (reported as ``n`` in units of h/2).
    """
    if path.n_particles != 2:
        raise ValueError("centre-of-mass form is for a particle pair")
    if not path.closed_in_reduced:
        raise ValueError("path must close in reduced space")
    d = path.dim
    hbar = getattr(flow, "hbar", 1.0)

    def to_cm_rel(pts):
        x1, x2 = pts[:, :d], pts[:, d:]
        return np.concatenate([(x1 + x2) / 2, x2 - x1], axis=1)

    def integrand_integral(p: PathPolyline) -> float:
        g, mag = flow.phase_gradient_at(p.points)
        if np.any(~(mag > flow.node_threshold)) or not np.all(np.isfinite(g)):
            raise MaskedPathError(f"path {p.path_id!r} touches the node mask")
        g1, g2 = g[:, :d], g[:, d:]
        # 2 k_cm . dl_cm + k_rel . dl_rel / 2 with k_cm = (k1 + k2) / 2, k_rel = k2 - k1
        f = np.concatenate([g1 + g2, 0.5 * (g2 - g1)], axis=1)
        dl = np.diff(to_cm_rel(p.points), axis=0)
        return float(np.sum(0.5 * (f[:-1] + f[1:]) * dl))

    prev = integrand_integral(path)
    p = path
    for _ in range(14):
        p = p.refined()
        cur = integrand_integral(p)
        if abs(cur - prev) < tol:
            break
        prev = cur
    val = hbar * (cur + (cur - prev) / 3) / (TWO_PI * hbar)
    if path.closed_in_full:
        n = int(round(val))
        return ReducedQuantization(val, "h", n, abs(val - n))
    n = int(round(2 * val))
    return ReducedQuantization(val, "h/2", n, abs(val - n / 2))
