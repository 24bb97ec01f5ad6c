import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exchange_lab import states
from exchange_lab.configspace import ConfigGrid, Permutation, all_permutations
from exchange_lab.wavefield import (
    IndefiniteParityError,
    SymmetryClass,
    WaveField,
    ZeroNormError,
    antisymmetrize,
    apply_permutation,
    apply_transposition,
    classify_symmetry,
    mixed_parity_check,
    mixed_parity_projection,
    parity_sign,
    permute_array,
    polar,
    symmetrize,
)

SMALL3 = ConfigGrid(3, 1, -2.0, 2.0, 8)


def random_field(grid, seed):
    r = np.random.default_rng(seed)
    return WaveField(grid, r.normal(size=grid.shape) + 1j * r.normal(size=grid.shape)).normalized()


def test_harmonic_pair_classes(line_grid):
    raw = states.harmonic_product(line_grid, [0, 1])
    assert classify_symmetry(raw).cls is SymmetryClass.ASYMMETRIC
    assert classify_symmetry(symmetrize(raw)).cls is SymmetryClass.SYMMETRIC
    assert classify_symmetry(antisymmetrize(raw)).cls is SymmetryClass.ANTISYMMETRIC


def test_exclusion_for_identical_modes(line_grid):
    with pytest.raises(ZeroNormError):
        antisymmetrize(states.harmonic_product(line_grid, [2, 2]))


def test_permute_array_matches_pointwise_definition():
    g = SMALL3
    a = random_field(g, 0).amplitudes
    s = Permutation((2, 0, 1))
    out = permute_array(a, g, s)
    for idx in [(0, 3, 5), (7, 1, 2), (4, 4, 6)]:
        assert out[idx] == a[g.permute_indices(idx, s)]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_projectors_give_definite_parity(seed):
    psi = random_field(SMALL3, seed)
    s, a = symmetrize(psi), antisymmetrize(psi)
    for sigma in all_permutations(3):
        np.testing.assert_allclose(apply_permutation(s, sigma).amplitudes, s.amplitudes, atol=1e-12)
        np.testing.assert_allclose(apply_permutation(a, sigma).amplitudes, sigma.sign * a.amplitudes, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_projectors_are_idempotent(seed):
    s = symmetrize(random_field(SMALL3, seed))
    assert symmetrize(s).distance(s) < 1e-12


def test_transposition_action_on_product_state(line_grid):
    x = line_grid.spatial_axes[0]
    f, g = states.gaussian_packet(x, -1.0), states.gaussian_packet(x, 2.0, 0.5)
    swapped = apply_transposition(states.product_state(line_grid, [f, g]), 0, 1)
    assert swapped.distance(states.product_state(line_grid, [g, f])) < 1e-12


def test_mixed_parity_is_impossible():
    g = ConfigGrid(4, 1, -3.0, 3.0, 8)
    raw = random_field(g, 7)
    for psi in (symmetrize(raw), antisymmetrize(raw)):
        v = mixed_parity_check(psi, (0, 1), (2, 3))
        assert v.route_difference == 0.0
        assert v.consistent
    assert mixed_parity_projection(raw, (0, 1), (2, 3)) < 1e-12


def test_parity_sign_refuses_indefinite(line_grid):
    with pytest.raises(IndefiniteParityError):
        parity_sign(states.harmonic_product(line_grid, [0, 1]), 0, 1)


def test_polar_velocity_of_plane_wave_packet(line_grid):
    x = line_grid.spatial_axes[0]
    k = 2 * np.pi / 16.0  # commensurate with the periodic box
    psi = states.product_state(line_grid, [states.gaussian_packet(x, 0, 2 * k), states.gaussian_packet(x, 0, -k)])
    v = polar(psi).velocity()
    core = np.abs(psi.amplitudes) > 1e-3 * psi.max_magnitude
    np.testing.assert_allclose(v[0][core], 2 * k, atol=1e-8)
    np.testing.assert_allclose(v[1][core], -k, atol=1e-8)
    # the off-grid route interpolates spectral derivatives at sixth order
    pts = np.array([[0.3, -0.2], [1.7, 1.1], [-2.2, 0.05]])
    grad, _ = psi.phase_gradient_at(pts)
    np.testing.assert_allclose(grad, np.tile([2 * k, -k], (3, 1)), atol=1e-3)


def test_phase_gradient_at_off_grid_points(plane_grid):
    psi = states.pwave_pair(plane_grid)
    pts = np.array([[-0.5, 0.0, 0.5, 0.0], [0.0, -0.33, 0.0, 0.71]])
    grad, mag = psi.phase_gradient_at(pts)
    # phase is angle(x_rel): gradient wrt x2 is (-ry, rx)/r^2
    rel = pts[:, 2:] - pts[:, :2]
    r2 = (rel**2).sum(axis=1)
    np.testing.assert_allclose(grad[:, 2], -rel[:, 1] / r2, atol=5e-3)
    np.testing.assert_allclose(grad[:, 3], rel[:, 0] / r2, atol=5e-3)
    assert np.all(mag > 0)


def test_fidelity_is_phase_blind(line_grid):
    psi = states.harmonic_product(line_grid, [0, 1])
    rotated = WaveField(line_grid, np.exp(0.4j) * psi.amplitudes)
    assert rotated.fidelity(psi) == pytest.approx(1.0, abs=1e-12)
