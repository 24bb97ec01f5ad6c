import numpy as np
import pytest

from exchange_lab import dynamics, states
from exchange_lab.configspace import ConfigGrid
from exchange_lab.wavefield import SymmetryClass, antisymmetrize


def test_split_operator_is_unitary(line_grid):
    psi = antisymmetrize(states.harmonic_product(line_grid, [0, 3]))
    rec = dynamics.propagate(psi, dynamics.harmonic(line_grid), 0.01, 200, 50)
    for snap in rec.snapshots:
        assert snap.norm == pytest.approx(1.0, abs=1e-12)


def test_energy_is_conserved(line_grid):
    x = line_grid.spatial_axes[0]
    psi = states.product_state(line_grid, [states.coherent_state(x, 1.0), states.coherent_state(x, -0.5, 0.4)])
    V = dynamics.harmonic(line_grid)
    rows = dynamics.time_series(dynamics.propagate(psi, V, 0.01, 300, 30))
    e = [r["energy"] for r in rows]
    assert max(e) - min(e) < 1e-4 * abs(e[0])


def test_coherent_centroid_follows_classical_orbit(line_grid):
    x = line_grid.spatial_axes[0]
    psi = states.product_state(line_grid, [states.coherent_state(x, 1.5), states.coherent_state(x, 1.5)])
    rec = dynamics.propagate(psi, dynamics.harmonic(line_grid), 0.01, 157, 157)
    rho = np.abs(rec.snapshots[-1].amplitudes) ** 2 * line_grid.cell_volume
    mean = (rho.sum(axis=1) * x).sum()
    assert mean == pytest.approx(1.5 * np.cos(rec.times[-1]), abs=1e-3)


def test_symmetry_drift_in_double_well(line_grid):
    psi = antisymmetrize(states.harmonic_product(line_grid, [0, 1]))
    rec = dynamics.propagate(psi, dynamics.double_well(line_grid, 1.5, 1.0), 0.01, 500, 100)
    d = dynamics.symmetry_drift(rec)
    assert d.s_minus.max() < 1e-10
    assert all(c is SymmetryClass.ANTISYMMETRIC for c in d.classes)


def test_drift_needs_symmetric_potential(line_grid):
    V = dynamics.Potential(line_grid, line_grid.mesh()[0], symmetric=False)
    rec = dynamics.propagate(states.harmonic_product(line_grid, [0, 0]), V, 0.01, 2, 1)
    with pytest.raises(dynamics.AsymmetricPotentialError):
        dynamics.symmetry_drift(rec)


def test_polynomial_matches_harmonic(line_grid):
    a = dynamics.polynomial(line_grid, [0.0, 0.0, 0.5]).values
    np.testing.assert_allclose(a, dynamics.harmonic(line_grid).values)


def test_propagator_eigenstates_are_stationary():
    g1 = ConfigGrid(1, 1, -8.0, 8.0, 64)
    E, S = dynamics.propagator_eigenstates(g1, dynamics.harmonic(g1), 0.01, 3)
    np.testing.assert_allclose(E, [0.5, 1.5, 2.5], atol=1e-3)
    g = ConfigGrid(2, 1, -8.0, 8.0, 64)
    psi = states.product_state(g, [S[0], S[1]]).normalized()
    rec = dynamics.propagate(psi, dynamics.harmonic(g), 0.01, 500, 500)
    drho = np.abs(np.abs(rec.snapshots[-1].amplitudes) ** 2 - np.abs(psi.amplitudes) ** 2).max()
    assert drho < 1e-10


def test_madelung_residuals_converge_at_second_order(line_grid):
    x = line_grid.spatial_axes[0]
    psi = states.product_state(line_grid, [states.coherent_state(x, 1.0)] * 2).normalized()
    V = dynamics.harmonic(line_grid)
    out = []
    for dt in (0.02, 0.01):
        rec = dynamics.propagate(psi, V, dt, int(round(0.4 / dt)))
        th = dynamics.madelung_theta_residual(rec)
        out.append(th.max_rel[np.argmin(np.abs(th.times - 0.2))])
    assert out[1] < 1e-3
    assert 3.2 < out[0] / out[1] < 4.8
