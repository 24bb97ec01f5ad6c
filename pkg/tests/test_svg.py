import numpy as np
import pytest

from exchange_lab import paths, states, svg
from exchange_lab.configspace import ConfigGrid
from exchange_lab.wavefield import antisymmetrize


def test_render_is_deterministic(line_grid):
    psi = antisymmetrize(states.harmonic_product(line_grid, [0, 1]))
    a = svg.render_heatmap(psi.amplitudes, line_grid, "magnitude", title="t")
    b = svg.render_heatmap(psi.amplitudes.copy(), line_grid, "magnitude", title="t")
    assert a == b and svg.svg_digest(a) == svg.svg_digest(b)
    assert "url(#hatch)" in a  # the coincidence node is hatched


def test_phase_style_and_overlays(plane_grid):
    psi = states.pwave_pair(plane_grid)
    spec = svg.SliceSpec((2, 3), ((0, 16), (1, 16)))
    loop = paths.relative_loop(0.5, 1.0)
    text = svg.render_heatmap(psi.amplitudes, plane_grid, "phase", spec, [(loop, "solid"), (loop, "dotted")])
    assert text.count("<polyline") == 2
    assert text.count("stroke-dasharray") == 1
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")


def test_bad_slices(plane_grid):
    a = np.zeros(plane_grid.shape)
    with pytest.raises(svg.SliceError):
        svg.render_heatmap(a, plane_grid, slice_spec=svg.SliceSpec((1, 1)))
    with pytest.raises(svg.SliceError):
        svg.render_heatmap(a, plane_grid, slice_spec=svg.SliceSpec((0, 1), ((2, 99),)))
    with pytest.raises(ValueError):
        svg.render_heatmap(a, plane_grid, "sepia")


def test_colour_maps_are_bounded():
    assert svg.magnitude_color(-1.0) == svg.magnitude_color(0.0)
    assert svg.magnitude_color(2.0) == svg.magnitude_color(1.0)
    assert svg.phase_color(0.0) == svg.phase_color(2 * np.pi)
