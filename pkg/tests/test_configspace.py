import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exchange_lab.configspace import (
    ConfigGrid,
    ConfigSpaceError,
    ParticleConfig,
    Permutation,
    all_permutations,
    canonicalize,
    from_cm_rel,
    orbit,
    permute,
    to_cm_rel,
    transpositions,
)

perms = st.integers(2, 5).flatmap(lambda n: st.permutations(list(range(n))).map(Permutation))


def same_size_pair(n_max=5):
    return st.integers(2, n_max).flatmap(
        lambda n: st.tuples(st.permutations(list(range(n))), st.permutations(list(range(n))))
    ).map(lambda t: (Permutation(t[0]), Permutation(t[1])))


@given(perms)
def test_inverse_composes_to_identity(s):
    assert (s @ s.inverse()).is_identity()
    assert (s.inverse() @ s).is_identity()


@given(same_size_pair())
def test_sign_is_multiplicative(pair):
    a, b = pair
    assert (a @ b).sign == a.sign * b.sign


@given(same_size_pair(), st.data())
def test_composition_matches_sequential_permute(pair, data):
    a, b = pair
    pos = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=a.n, max_size=a.n)))
    c = ParticleConfig(pos)
    # permute by b, then by a
    assert permute(permute(c, b), a) == permute(c, a @ b)


def test_transposition_is_odd_and_cycle_parity():
    assert Permutation.transposition(4, 1, 3).sign == -1
    assert Permutation.cycle(3, [0, 1, 2]).sign == 1
    assert Permutation.cycle(4, [0, 1, 2, 3]).sign == -1


def test_group_sizes():
    assert len(all_permutations(4)) == 24
    assert len(transpositions(4)) == 6


def test_bad_permutations_rejected():
    with pytest.raises(ConfigSpaceError):
        Permutation((0, 0, 1))
    with pytest.raises(ConfigSpaceError):
        Permutation.transposition(3, 1, 1)


def test_orbit_and_canonical_form():
    c = ParticleConfig([[0.0], [1.0], [1.0]])
    assert len(orbit(c)) == 3
    red = canonicalize(ParticleConfig([[2.0], [-1.0], [0.5]]))
    assert red.orbit_size == 6
    assert red.representative.positions[:, 0].tolist() == [-1.0, 0.5, 2.0]


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_canonicalization_is_permutation_invariant(xs):
    c = ParticleConfig(np.array(xs).reshape(3, 2))
    for p in itertools.permutations(range(3)):
        assert canonicalize(permute(c, Permutation(p))).representative == canonicalize(c).representative


@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(-4, 4), st.floats(-4, 4))
def test_cm_rel_round_trip(a, b, c, d):
    cfg = ParticleConfig([[a, b], [c, d]])
    cm, rel = to_cm_rel(cfg)
    back = from_cm_rel(cm, rel)
    np.testing.assert_allclose(back.positions, cfg.positions, atol=1e-12)


def test_box_is_enforced():
    with pytest.raises(ConfigSpaceError):
        ParticleConfig([[0.0], [9.0]], box=((-8.0,), (8.0,)))


def test_grid_validation():
    with pytest.raises(ConfigSpaceError):
        ConfigGrid(3, 2, -1.0, 1.0, 8)  # six axes
    with pytest.raises(ConfigSpaceError):
        ConfigGrid(2, 1, -1.0, 1.0, 4)
    with pytest.raises(ConfigSpaceError):
        ConfigGrid(2, 1, 1.0, -1.0, 16)


def test_grid_layout_is_particle_major():
    g = ConfigGrid(2, 2, -1.0, 1.0, (8, 10))
    assert g.shape == (8, 10, 8, 10)
    assert list(g.particle_axes(1)) == [2, 3]
    assert ConfigGrid.from_dict(g.to_dict()) == g


@settings(max_examples=30)
@given(perms, st.data())
def test_grid_index_permutation_matches_config_permutation(s, data):
    n = s.n
    if n > 4:
        return
    g = ConfigGrid(n, 1, -1.0, 1.0, 8)
    idx = tuple(data.draw(st.lists(st.integers(0, 7), min_size=n, max_size=n)))
    assert g.point(g.permute_indices(idx, s)) == permute(g.point(idx), s)


def test_canonical_mask_covers_each_orbit_once():
    g = ConfigGrid(2, 1, -1.0, 1.0, 8)
    m = g.canonical_mask()
    # strictly ordered points plus the diagonal
    assert m.sum() == 8 * 9 // 2
