import numpy as np
import pytest

from exchange_lab import bohm, dynamics, states
from exchange_lab.wavefield import antisymmetrize, symmetrize


def test_definite_parity_states_are_consistent(line_grid):
    for psi in (
        antisymmetrize(states.harmonic_product(line_grid, [0, 1])),
        symmetrize(states.harmonic_product(line_grid, [1, 2])),
    ):
        r = bohm.consistency_residual(psi)
        assert not r.empty
        assert r.residual < 1e-6


def test_asymmetric_state_disagrees(line_grid):
    r = bohm.consistency_residual(states.two_mode_asymmetric(line_grid))
    assert r.residual > 0.1
    assert r.pair == (0, 1)


def test_unlinked_velocity_is_labelling_independent(line_grid):
    x = line_grid.spatial_axes[0]
    k = 2 * np.pi / 16.0
    psi = symmetrize(states.product_state(line_grid, [states.gaussian_packet(x, -1, k), states.gaussian_packet(x, 1, -k)]))
    s = bohm.UnorderedParticleSet(np.array([[0.75], [-0.5]]))
    assert s.positions[:, 0].tolist() == [-0.5, 0.75]
    va = bohm.unlinked_velocity(psi, s)
    assert va.disagreement < 1e-8


def test_disagreement_report_shape(line_grid):
    rep = bohm.disagreement_report(states.two_mode_asymmetric(line_grid), "asym")
    assert set(rep) == {"state_id", "residual", "argmax_point", "per_mapping_velocities"}
    assert len(rep["per_mapping_velocities"]) == 2
    assert len(rep["argmax_point"]) == 2


def test_stationary_state_trajectories_do_not_move(line_grid):
    psi = states.harmonic_product(line_grid, [0, 0])
    rec = dynamics.propagate(psi, dynamics.harmonic(line_grid), 0.01, 100, 10)
    starts = np.array([[0.3, -0.4], [1.0, 0.2]])
    tr = bohm.transport(rec, starts)
    # the analytic ground state is stationary on the grid only up to discretisation error
    np.testing.assert_allclose(tr.positions[-1], starts, atol=1e-4)
    rows = list(tr.csv_rows())
    assert tuple(rows[0][:2]) == (0, 0) and len(rows[0]) == 5


def test_coherent_trajectories_follow_classical_motion(line_grid):
    x = line_grid.spatial_axes[0]
    psi = states.product_state(line_grid, [states.coherent_state(x, 1.0)] * 2)
    rec = dynamics.propagate(psi, dynamics.harmonic(line_grid), 0.01, 157, 10)
    starts = np.array([[1.2, 0.6]])
    tr = bohm.transport(rec, starts)
    t = tr.times[-1]
    # coherent-state guidance: each coordinate is shifted rigidly with the packet centre
    want = starts[0] - 1.0 + np.cos(t)
    np.testing.assert_allclose(tr.positions[-1, 0], want, atol=1e-3)


def test_equivariance_needs_enough_samples(line_grid):
    rec = dynamics.propagate(states.harmonic_product(line_grid, [0, 0]), dynamics.harmonic(line_grid), 0.01, 2, 1)
    with pytest.raises(ValueError):
        bohm.equivariance_test(rec, 10)
