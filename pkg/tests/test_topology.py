import numpy as np
import pytest

from exchange_lab import miw, paths, states, topology
from exchange_lab.configspace import ConfigGrid
from exchange_lab.dynamics import harmonic, propagate
from exchange_lab.wavefield import antisymmetrize


def test_pwave_half_loop_is_fermionic(plane_grid):
    ph = topology.half_loop_phase(states.pwave_pair(plane_grid), paths.relative_loop(0.5, 1.0, path_id="c"))
    assert ph.kind is topology.ExchangeKind.FERMIONIC
    assert abs(ph.alpha - np.pi) < 1e-3
    d = ph.to_dict()
    assert set(d) == {"path_id", "alpha", "doubled_integral", "classification", "homotopy_witnesses"}


def test_gaussian_pair_is_bosonic(plane_grid):
    ph = topology.half_loop_phase(states.gaussian_pair(plane_grid, (0.3, 0.0)), paths.relative_loop(0.5, 1.0))
    assert ph.kind is topology.ExchangeKind.BOSONIC


def test_homotopy_invariance(plane_grid):
    ps = [
        paths.relative_loop(0.5, 1.0),
        paths.relative_loop(0.5, 1.2, (0.2, 0.1), start_angle=0.7, radial_wobble=0.2),
    ]
    summary, spread = topology.homotopy_phases(states.pwave_pair(plane_grid), ps)
    assert spread < 1e-3
    assert len(summary.homotopy_witnesses) == 2


def test_dichotomy_verdicts():
    assert topology.dichotomy_check(0.0).definite
    assert topology.dichotomy_check(np.pi).definite
    assert not topology.dichotomy_check(0.3 * np.pi).definite


def test_anyons_are_two_dimensional():
    for d in (1, 3):
        with pytest.raises(topology.AnyonDimensionError):
            topology.check_anyon_dimension(d)
    topology.check_anyon_dimension(2)
    with pytest.raises(topology.AnyonDimensionError):
        topology.anyon_construct(0.3 * np.pi, ConfigGrid(2, 1, -4.0, 4.0, 16))


def test_anyon_lift_follows_dichotomy(plane_grid):
    r = topology.anyon_report(0.3 * np.pi, plane_grid)
    assert not r.lift and not r.loop_liftable
    assert abs(r.doubled_integral - 0.6 * np.pi) < 2e-3
    assert topology.anyon_report(np.pi, plane_grid).lift


def test_pi_anyon_matches_pwave(plane_grid):
    mv = topology.anyon_construct(np.pi, plane_grid)
    assert mv.lift().psi.fidelity(states.pwave_pair(plane_grid)) > 1 - 1e-9


def test_reduce_and_unreduce_round_trip(plane_grid):
    psi = states.pwave_pair(plane_grid)
    back = topology.reduce_field(psi).unreduce()
    assert back.distance(psi) < 1e-12


def test_coincidence_node_survives_evolution(line_grid):
    psi = antisymmetrize(states.harmonic_product(line_grid, [0, 1]))
    assert topology.coincidence_node_check(psi).passed
    rec = propagate(psi, harmonic(line_grid), 0.01, 200, 200)
    assert topology.coincidence_node_check(rec.snapshots[-1]).passed


def test_shrink_study_keeps_winding(plane_grid):
    flow = miw.flow_from_wavefield(states.pwave_pair(plane_grid))
    s = topology.shrink_loop_study(flow, (1.0, 0.5, 0.25))
    np.testing.assert_allclose(s.integrals, 1.0, atol=1e-3)
    assert s.min_density[0] > s.min_density[1] > s.min_density[2]


def test_reduced_half_loop_is_half_quantum(plane_grid):
    flow = miw.flow_from_wavefield(states.pwave_pair(plane_grid))
    r = topology.reduced_quantization_check(flow, paths.relative_loop(0.5, 1.0))
    assert r.unit == "h/2" and r.n == 1
    assert abs(r.integral - 0.5) < 1e-3
