import pytest

from exchange_lab import scenario
from exchange_lab.scenario import ScenarioError
from exchange_lab.wavefield import SymmetryClass, ZeroNormError, classify_symmetry

BASE = {
    "name": "t",
    "grid": {"n_particles": 2, "dim": 1, "lo": -6.0, "hi": 6.0, "points": 32},
    "potential": {"kind": "harmonic"},
    "state": {"kind": "harmonic", "modes": [0, 1], "symmetrization": "antisym"},
    "experiments": [{"pipeline": "pauli-node"}],
}


def with_(**kw):
    d = {k: (dict(v) if isinstance(v, dict) else v) for k, v in BASE.items()}
    d.update(kw)
    return d


def test_all_bundled_scenarios_load():
    names = scenario.bundled_names()
    for required in ("dichotomy-pipeline", "unlinked-consistency", "winding"):
        assert required in names
    for n in names:
        sc = scenario.load(n)
        assert sc.name == n and sc.experiments


def test_experiment_overrides_merge():
    sc = scenario.from_dict(with_(experiments=[{"pipeline": "pauli-node", "grid": {"points": 48}}]))
    g = sc.section(sc.experiments[0], "grid")
    assert g["points"] == 48 and g["lo"] == -6.0


def test_config_hash_tracks_content():
    a = scenario.from_dict(with_())
    assert a.config_hash == scenario.from_dict(with_()).config_hash
    assert a.with_seed(5).config_hash != a.config_hash


@pytest.mark.parametrize(
    "bad",
    [
        {"name": ""},
        {"seed": -1},
        {"experiments": []},
        {"experiments": [{"pipeline": "no-such"}]},
        {"grid": {"n_particles": 3, "dim": 2, "points": 16}},
        {"grid": "wide"},
    ],
)
def test_invalid_scenarios(bad):
    with pytest.raises(ScenarioError):
        scenario.from_dict(with_(**bad))


def test_unknown_reference():
    with pytest.raises(ScenarioError):
        scenario.load("definitely-not-a-scenario")


def test_toml_parse_errors(tmp_path):
    p = tmp_path / "x.toml"
    p.write_text("name = \n")
    with pytest.raises(ScenarioError):
        scenario.load(p)


@pytest.mark.parametrize("kind", ["harmonic", "double-well", "free", "polynomial"])
def test_potentials_are_exchange_symmetric(kind):
    g = scenario.build_grid(BASE["grid"])
    spec = {"kind": kind, "coeffs": [0.0, 0.1, 0.5]} if kind == "polynomial" else {"kind": kind}
    V = scenario.build_potential(spec, g)
    assert V.symmetric
    assert (V.values == V.values.T).all()


def test_hard_wall_raises_edges():
    g = scenario.build_grid(BASE["grid"])
    V = scenario.build_potential({"kind": "free", "hard_wall": True}, g)
    assert V.values[0, 16] >= 1e4 and V.values[16, 16] == 0.0


def test_state_construction_and_exclusion():
    g = scenario.build_grid(BASE["grid"])
    psi = scenario.build_initial_state(BASE["state"], g)
    assert classify_symmetry(psi).cls is SymmetryClass.ANTISYMMETRIC
    with pytest.raises(ZeroNormError):
        scenario.build_initial_state({"kind": "harmonic", "modes": [1, 1], "symmetrization": "antisym"}, g)
    with pytest.raises(ScenarioError):
        scenario.build_initial_state({"kind": "harmonic", "symmetrization": "anyon"}, g)
    with pytest.raises(ScenarioError):
        scenario.build_initial_state({"kind": "packets", "packets": [{}]}, g)


def test_eigenstate_kind_uses_potential():
    g = scenario.build_grid(BASE["grid"])
    psi = scenario.build_initial_state({"kind": "eigenstate", "modes": [0, 1], "symmetrization": "sym"}, g, {"kind": "harmonic"})
    assert classify_symmetry(psi).cls is SymmetryClass.SYMMETRIC
