import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exchange_lab import paths, states
from exchange_lab.configspace import Permutation, to_cm_rel, ParticleConfig


@given(st.floats(0.3, 2.0), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 6.28))
def test_half_relative_loop_swaps_particles(r, cx, cy, a0):
    p = paths.relative_loop(0.5, r, (cx, cy), start_angle=a0)
    assert p.closed_in_reduced and not p.closed_in_full
    assert p.endpoint_permutation() == Permutation((1, 0))
    cm0, rel0 = to_cm_rel(ParticleConfig(p.start.reshape(2, 2)))
    cm1, rel1 = to_cm_rel(ParticleConfig(p.end.reshape(2, 2)))
    np.testing.assert_allclose(cm0, cm1, atol=1e-12)
    np.testing.assert_allclose(rel0, -rel1, atol=1e-12)


def test_doubled_half_loop_closes():
    p = paths.relative_loop(0.5, 1.0).doubled()
    assert p.closed_in_full


def test_line_integral_of_uniform_field():
    class Uniform:
        node_threshold = 0.0

        def phase_gradient_at(self, pts):
            g = np.zeros_like(pts)
            g[:, 0] = 2.0
            return g, np.ones(len(pts))

    seg = paths.PathPolyline.from_curve(lambda s: np.stack([3 * s, 0 * s, 0 * s, 0 * s], axis=1), 2, 2)
    assert paths.line_integral(Uniform(), seg) == pytest.approx(6.0)


def test_masked_path_raises(plane_grid):
    psi = states.pwave_pair(plane_grid)
    through_node = paths.PathPolyline.from_curve(
        lambda s: np.stack([-1 + 2 * s, 0 * s, 1 - 2 * s, 0 * s], axis=1), 2, 2, path_id="head-on"
    )
    with pytest.raises(paths.MaskedPathError):
        paths.line_integral(psi, through_node)


@settings(max_examples=8, deadline=None)
@given(st.integers(1, 4))
def test_repeat_multiplies_integral_of_exact_source(k):
    class Winding:
        node_threshold = 0.0

        def phase_gradient_at(self, pts):
            rx, ry = pts[:, 2] - pts[:, 0], pts[:, 3] - pts[:, 1]
            r2 = rx**2 + ry**2
            g = np.stack([ry / r2, -rx / r2, -ry / r2, rx / r2], axis=1)
            return g, np.ones(len(pts))

    loop = paths.relative_loop(1.0, 1.0)
    assert paths.line_integral(Winding(), loop.repeated(k), tol=1e-7) == pytest.approx(2 * np.pi * k, abs=1e-6)
