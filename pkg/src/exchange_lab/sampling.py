"""Drawing configurations from grid densities and kernel density estimates on grids."""
from __future__ import annotations

import itertools
import math

import numpy as np

from .configspace import ConfigGrid, all_permutations


def draw_configs(
    density: np.ndarray,
    grid: ConfigGrid,
    count: int,
    rng: np.random.Generator,
    stratified: bool = True,
) -> np.ndarray:
    """Inverse-CDF draws from a grid density with uniform in-cell jitter.

    With ``stratified`` the uniforms are ``(i + U_i) / count`` in shuffled
    order, one per probability stratum; otherwise they are iid.
    Returns flat configurations, shape ``(count, D)``.
    """
    p = np.asarray(density, dtype=float).ravel()
    if np.any(p < 0) or p.sum() <= 0:
        raise ValueError("density must be nonnegative with positive mass")
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    if stratified:
        u = rng.permutation((np.arange(count) + rng.random(count)) / count)
    else:
        u = rng.random(count)
    flat = np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1)
    idx = np.unravel_index(flat, grid.shape)
    h = np.array(grid.spacing)
    pts = np.stack([ax[i] for ax, i in zip(grid.axes, idx)], axis=1)
    return pts + (rng.random(pts.shape) - 0.5) * h


def orbit_expand(points: np.ndarray, n_particles: int, dim: int, values: np.ndarray | None = None):
    """Stack all ``N!`` slot orderings of each configuration.

    ``values`` (per-slot vectors, e.g. velocities, shape ``(M, D)``) are
    permuted alongside the positions.
    """
    M = points.shape[0]
    P = points.reshape(M, n_particles, dim)
    perms = list(itertools.permutations(range(n_particles)))
    out = np.concatenate([P[:, list(p)].reshape(M, -1) for p in perms])
    if values is None:
        return out
    Vv = values.reshape(M, n_particles, dim)
    return out, np.concatenate([Vv[:, list(p)].reshape(M, -1) for p in perms])


def silverman_bandwidth(points: np.ndarray, n_particles: int, dim: int) -> np.ndarray:
    """Per-axis Silverman rule ``sigma_a (4 / ((D + 2) n))^(1 / (D + 4))``.

    Spreads are pooled over particles per spatial component so all identical
    particle blocks share one bandwidth.
    """
    n, D = points.shape
    sig = points.std(axis=0).reshape(n_particles, dim).mean(axis=0)
    factor = (4.0 / ((D + 2) * n)) ** (1.0 / (D + 4))
    return np.tile(sig * factor, n_particles)


def _axis_kernels(points, grid, bandwidth):
    mats = []
    for a, ax in enumerate(grid.axes):
        h = bandwidth[a]
        K = np.exp(-0.5 * ((ax[None, :] - points[:, a : a + 1]) / h) ** 2)
        mass = K.sum(axis=1, keepdims=True) * (ax[1] - ax[0])
        with np.errstate(invalid="ignore", divide="ignore"):
            K = np.where(mass > 0, K / mass, 0.0)
        mats.append(K)
    return mats


def kde_grid(points: np.ndarray, grid: ConfigGrid, bandwidth, weights: np.ndarray | None = None) -> np.ndarray:
    """Separable Gaussian kernel sums on the grid.

    Each kernel is renormalised to unit mass on the grid, so an unweighted
    call integrates to exactly one. With ``weights`` of shape ``(n, K)`` the
    result is ``(K, *grid)`` of weighted sums (each divided by ``n``).
    """
    points = np.atleast_2d(points)
    n = points.shape[0]
    bw = np.broadcast_to(np.asarray(bandwidth, dtype=float), (grid.D,))
    if np.any(bw <= 0):
        raise ValueError("bandwidth must be positive")
    mats = _axis_kernels(points, grid, bw)
    W = np.ones((n, 1)) if weights is None else np.asarray(weights, dtype=float).reshape(n, -1)
    outs = []
    for k in range(W.shape[1]):
        outs.append(_contract(mats, W[:, k]) / n)
    out = np.stack(outs)
    return out[0] if weights is None else out


def _contract(mats, w):
    D = len(mats)
    if D == 1:
        return w @ mats[0]
    if D == 2:
        return (mats[0] * w[:, None]).T @ mats[1]
    half = D // 2
    left = mats[0] * w[:, None]
    for m in mats[1:half]:
        left = (left[:, :, None] * m[:, None, :]).reshape(left.shape[0], -1)
    right = mats[half]
    for m in mats[half + 1 :]:
        right = (right[:, :, None] * m[:, None, :]).reshape(right.shape[0], -1)
    shape = tuple(m.shape[1] for m in mats)
    return (left.T @ right).reshape(shape)


def sorted_mean(stack: np.ndarray) -> np.ndarray:
    """Mean over axis 0 after sorting, so it depends only on the multiset of values."""
    return np.sort(stack, axis=0).sum(axis=0) / stack.shape[0]


def exact_symmetrize(rho: np.ndarray, grid: ConfigGrid, slot_fields: np.ndarray | None = None):
    """Make a scalar field exchange-invariant and slot fields exchange-covariant bitwise.

    ``slot_fields`` has shape ``(D, *grid)`` (slot-major components). The
    covariant image under ``sigma`` is ``F_i(c) -> F_{sigma^-1(i)}(P_sigma c)``.
    """
    from .wavefield import permute_array

    perms = all_permutations(grid.n_particles)
    rho_s = sorted_mean(np.stack([permute_array(rho, grid, s) for s in perms]))
    if slot_fields is None:
        return rho_s
    d = grid.dim
    images = []
    for s in perms:
        inv = s.inverse()
        comps = []
        for i in range(grid.n_particles):
            for c in range(d):
                comps.append(permute_array(slot_fields[inv(i) * d + c], grid, s))
        images.append(np.stack(comps))
    return rho_s, sorted_mean(np.stack(images))


def l1_distance(a: np.ndarray, b: np.ndarray, grid: ConfigGrid) -> float:
    return float(np.sum(np.abs(a - b)) * grid.cell_volume)


def orbit_count(n_particles: int) -> int:
    return math.factorial(n_particles)


def sharpen(points: np.ndarray, grid: ConfigGrid, bandwidth, pilot: np.ndarray) -> np.ndarray:
    """Data sharpening: shift each point by ``(h^2 / 2) grad ln(pilot)``.

    A Gaussian KDE of the shifted points has no ``O(h^2)`` broadening bias,
    which matters when the estimate feeds second and third derivatives.
    ``pilot`` is a KDE of the same points on ``grid``.
    """
    from . import numerics

    bw = np.broadcast_to(np.asarray(bandwidth, dtype=float), (grid.D,))
    L = np.log(np.maximum(pilot, np.finfo(float).tiny))
    G = np.stack([numerics.d1(L, a, grid.spacing[a], periodic=False) for a in range(grid.D)])
    G = np.nan_to_num(G)
    shift = numerics.interpolate(G, grid.axes, points, False).T
    return points + 0.5 * bw**2 * shift
