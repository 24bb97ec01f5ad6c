"""Initial states: harmonic orbitals, packets, pair states in 2D.

Internal units: hbar = m = 1 unless a mass is passed explicitly.
"""
from __future__ import annotations

import numpy as np

from .configspace import ConfigGrid
from .wavefield import WaveField


def hermite_functions(x: np.ndarray, n_max: int, omega: float = 1.0, mass: float = 1.0) -> np.ndarray:
    """Normalised harmonic-oscillator eigenfunctions ``phi_0 .. phi_n_max`` at ``x``.

    Uses the stable three-term recurrence for Hermite functions.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(mass * omega)
    xi = s * x
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = (s * s / np.pi) ** 0.25 * np.exp(-xi**2 / 2)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * xi * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def gaussian_packet(x: np.ndarray, x0: float = 0.0, k0: float = 0.0, sigma: float = 1 / np.sqrt(2)) -> np.ndarray:
    """Normalised 1D Gaussian with position spread ``sigma`` and mean momentum ``k0``.

    ``sigma = 1/sqrt(2)`` is the harmonic ground-state width for omega = m = 1.
    """
    x = np.asarray(x, dtype=float)
    return (2 * np.pi * sigma**2) ** -0.25 * np.exp(-((x - x0) ** 2) / (4 * sigma**2) + 1j * k0 * x)


def coherent_state(x: np.ndarray, x0: float, p0: float = 0.0, omega: float = 1.0) -> np.ndarray:
    return gaussian_packet(x, x0, p0, 1 / np.sqrt(2 * omega))


def product_state(grid: ConfigGrid, orbitals) -> WaveField:
    """``prod_k orbitals[k](x_k)`` for d = 1, orbitals given as arrays on the spatial axis."""
    if grid.dim != 1:
        raise ValueError("product_state takes 1D orbitals; use from_function for d > 1")
    if len(orbitals) != grid.n_particles:
        raise ValueError("one orbital per particle required")
    amp = np.ones(grid.shape, dtype=complex)
    for k, orb in enumerate(orbitals):
        shape = [1] * grid.D
        shape[k] = -1
        amp = amp * np.asarray(orb).reshape(shape)
    return WaveField(grid, amp)


def harmonic_product(grid: ConfigGrid, modes, omega: float = 1.0) -> WaveField:
    x = grid.spatial_axes[0]
    phi = hermite_functions(x, max(modes), omega)
    return product_state(grid, [phi[n] for n in modes]).normalized()


def _cm_rel(grid: ConfigGrid):
    if grid.n_particles != 2 or grid.dim != 2:
        raise ValueError("pair states need 2 particles in 2D")
    x1, y1, x2, y2 = grid.mesh()
    return (x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1


def pwave_pair(grid: ConfigGrid, winding: int = 1) -> WaveField:
    """``(x_rel + i y_rel)^winding exp(-r^2/2) exp(-|x_cm|^2)``; odd winding is antisymmetric."""
    cx, cy, rx, ry = _cm_rel(grid)
    z = rx + 1j * ry
    amp = z**winding * np.exp(-(rx**2 + ry**2) / 2 - (cx**2 + cy**2))
    return WaveField(grid, amp).normalized()


def gaussian_pair(grid: ConfigGrid, k_cm=(0.0, 0.0)) -> WaveField:
    """Symmetric nodeless pair ``exp(-r^2/2) exp(-|x_cm|^2)`` with optional CM momentum."""
    cx, cy, rx, ry = _cm_rel(grid)
    amp = np.exp(-(rx**2 + ry**2) / 2 - (cx**2 + cy**2) + 2j * (k_cm[0] * cx + k_cm[1] * cy))
    return WaveField(grid, amp).normalized()


def two_mode_asymmetric(grid: ConfigGrid, k0: float = 1.0, k1: float = -1.0, shift: float = 1.0) -> WaveField:
    """``phi_a(x1) phi_b(x2)`` with displaced Gaussians carrying unequal phase winds (d = 1)."""
    x = grid.spatial_axes[0]
    a = gaussian_packet(x, -shift, k0)
    b = gaussian_packet(x, shift, k1)
    return product_state(grid, [a, b]).normalized()
