import json

import pytest

from exchange_lab import cli, io

TIGHT = """
name = "tight"
[grid]
n_particles = 4
dim = 1
lo = -3.0
hi = 3.0
points = 8
[[experiments]]
pipeline = "mixed-parity"
projection_tol = 1e-30
"""

MASKED = """
name = "masked"
[grid]
n_particles = 2
dim = 2
lo = -4.0
hi = 4.0
points = 32
[[experiments]]
pipeline = "quantization"
radius = 1e-4
states = [{ kind = "pwave-2d", label = "pwave", expect = "fermionic" }]
"""


def test_list_scenarios(capsys):
    assert cli.main(["list-scenarios"]) == 0
    assert "winding" in capsys.readouterr().out


def test_run_writes_deterministic_reports(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "mixed-parity", "--out", str(a)]) == 0
    assert cli.main(["run", "mixed-parity", "--out", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    rep = json.loads((a / "report.json").read_text())
    assert rep["status"] == "pass"
    assert set(rep["provenance"]) == {"config_hash", "seed", "threads", "versions"}
    for check in rep["experiments"][0]["checks"]:
        assert {"value", "tolerance", "status"} <= set(check)
    assert "wall time" in (a / "report.txt").read_text()
    assert "wall" not in (a / "report.json").read_text()


def test_seed_override_is_recorded(tmp_path):
    assert cli.main(["run", "mixed-parity", "--out", str(tmp_path), "--seed", "11"]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["provenance"]["seed"] == 11


def test_verify_writes_nothing(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["verify", "unlinked-consistency"]) == 0
    assert not any(tmp_path.iterdir())


def test_tolerance_failure_exit_code(tmp_path):
    p = tmp_path / "tight.toml"
    p.write_text(TIGHT)
    assert cli.main(["verify", str(p)]) == cli.EXIT_TOLERANCE


def test_numerical_failure_exit_code(tmp_path):
    p = tmp_path / "masked.toml"
    p.write_text(MASKED)
    assert cli.main(["verify", str(p)]) == cli.EXIT_NUMERICAL


def test_config_error_exit_codes(tmp_path, monkeypatch):
    assert cli.main(["run", "no-such-scenario"]) == cli.EXIT_CONFIG
    assert cli.main(["frobnicate"]) == cli.EXIT_CONFIG
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    assert cli.main(["verify", "mixed-parity"]) == cli.EXIT_CONFIG


def test_state_config_error_inside_pipeline(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(MASKED.replace('pipeline = "quantization"', 'pipeline = "pauli-node"').replace(
        'states = [{ kind = "pwave-2d", label = "pwave", expect = "fermionic" }]', ""
    ) + '\n[state]\nkind = "harmonic"\nmodes = [1, 1]\nsymmetrization = "antisym"\n')
    assert cli.main(["verify", str(p)]) == cli.EXIT_CONFIG


def test_thread_env_overrides_flag(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.resolve_threads(1) == 3
    monkeypatch.delenv(cli.THREADS_ENV)
    assert cli.resolve_threads(2) == 2
    assert cli.resolve_threads(None) is None


def test_render(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "symmetry-preservation", "--out", str(out)]) == 0
    wf = out / "harmonic" / "antisym_snapshot1.wf"
    assert io.read_wf(wf)[0].D == 2
    assert cli.main(["render", str(wf), "--phase", "--out", str(tmp_path / "p.svg")]) == 0
    assert cli.main(["render", str(wf), "--out", str(tmp_path / "m.svg")]) == 0
    assert (tmp_path / "p.svg").read_text() != (tmp_path / "m.svg").read_text()
    assert cli.main(["render", str(tmp_path / "missing.wf")]) == cli.EXIT_CONFIG
