import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exchange_lab import io, states
from exchange_lab.configspace import ConfigGrid


@settings(max_examples=15, deadline=None)
@given(st.integers(8, 12), st.booleans(), st.integers(0, 1000))
def test_wf_round_trip(tmp_path_factory, n, periodic, seed):
    g = ConfigGrid(2, 1, -1.0, 2.0, n, periodic)
    r = np.random.default_rng(seed)
    a = r.normal(size=g.shape) + 1j * r.normal(size=g.shape)
    p = tmp_path_factory.mktemp("wf") / "f.wf"
    io.write_wf(p, g, a, kind="branch", branch=1)
    g2, b, header = io.read_wf(p)
    assert g2 == g
    np.testing.assert_array_equal(a, b)
    assert header["branch"] == 1


def test_wf_is_byte_deterministic(tmp_path, line_grid):
    psi = states.harmonic_product(line_grid, [0, 1])
    io.write_wavefield(tmp_path / "a.wf", psi)
    io.write_wavefield(tmp_path / "b.wf", psi)
    assert (tmp_path / "a.wf").read_bytes() == (tmp_path / "b.wf").read_bytes()
    assert io.read_wavefield(tmp_path / "a.wf").distance(psi) == 0.0


def test_bad_containers(tmp_path, line_grid):
    (tmp_path / "x.wf").write_bytes(b"nope")
    with pytest.raises(io.FormatError):
        io.read_wf(tmp_path / "x.wf")
    io.write_wf(tmp_path / "y.wf", line_grid, np.zeros(line_grid.shape))
    raw = (tmp_path / "y.wf").read_bytes()
    (tmp_path / "y.wf").write_bytes(raw[:-16])
    with pytest.raises(io.FormatError):
        io.read_wf(tmp_path / "y.wf")
    with pytest.raises(io.FormatError):
        io.write_wf(tmp_path / "z.wf", line_grid, np.zeros((3, 3)))


def test_json_cleaning_and_csv(tmp_path):
    obj = {"b": np.float64(np.nan), "a": np.arange(3), "c": (np.int64(2), 1.5 + 2j)}
    text = io.to_json(obj)
    assert text.index('"a"') < text.index('"b"')
    assert '"nan"' in text
    io.write_csv(tmp_path / "t.csv", ["step", "t"], [[0, 0.1], [1, 0.2]])
    header, rows = io.read_csv(tmp_path / "t.csv")
    assert header == ["step", "t"] and rows[1] == ["1", "0.2"]
    io.write_jsonl(tmp_path / "e.jsonl", [{"particles": [[[0.0], [1.0]]]}])
    assert io.read_jsonl(tmp_path / "e.jsonl")[0]["particles"] == [[[0.0], [1.0]]]
