"""Scenario files: loading, validation and construction of grids, potentials and states.

A scenario is a TOML (or JSON) document with top-level ``name``, ``seed``
and the tables ``grid``, ``potential``, ``state``, ``evolution`` plus an
``experiments`` array. Each experiment may override any of those four tables
with its own sub-table of the same name.
"""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import dynamics, states
from .configspace import ConfigGrid, ConfigSpaceError
from .wavefield import (
    SymmetryClass,
    WaveField,
    antisymmetrize,
    classify_symmetry,
    symmetrize,
)


class ScenarioError(ValueError):
    """The scenario is malformed or refers to something that does not exist."""


SECTIONS = ("grid", "potential", "state", "evolution")
POTENTIALS = ("harmonic", "double-well", "free", "polynomial")
STATE_KINDS = ("harmonic", "packets", "pwave-2d", "gaussian-pair-2d", "two-mode-asymmetric", "eigenstate")
SYMMETRIZATION = ("none", "sym", "antisym")


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    defaults: dict
    experiments: tuple
    source: dict = field(repr=False)
    description: str = ""

    def section(self, experiment: dict, key: str) -> dict:
        """The ``key`` table for one experiment: defaults updated by the experiment's override."""
        out = copy.deepcopy(self.defaults.get(key, {}))
        out.update(experiment.get(key, {}))
        return out

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.source, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()

    def with_seed(self, seed: int) -> "Scenario":
        src = dict(self.source)
        src["seed"] = seed
        return from_dict(src)


def _parse(text: str, suffix: str) -> dict:
    try:
        if suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot parse scenario: {exc}") from exc


def bundled_names() -> list[str]:
    root = resources.files("exchange_lab") / "scenarios"
    return sorted(p.name[: -len(".toml")] for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_text(name: str) -> str:
    return (resources.files("exchange_lab") / "scenarios" / f"{name}.toml").read_text()


def load(ref: str | Path) -> Scenario:
    """Load a scenario from a path, or by bundled name when no such file exists."""
    p = Path(ref)
    if p.is_file():
        return from_dict(_parse(p.read_text(), p.suffix.lower()))
    name = str(ref)
    if name in bundled_names():
        return from_dict(_parse(bundled_text(name), ".toml"))
    raise ScenarioError(f"no scenario file or bundled scenario named {name!r}")


def from_dict(d: dict) -> Scenario:
    from .experiments import REGISTRY

    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a table")
    name = d.get("name")
    if not isinstance(name, str) or not name:
        raise ScenarioError("scenario needs a non-empty 'name'")
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ScenarioError("'seed' must be a nonnegative integer")
    exps = d.get("experiments")
    if not isinstance(exps, list) or not exps:
        raise ScenarioError("scenario needs a non-empty 'experiments' array")
    defaults = {k: d.get(k, {}) for k in SECTIONS}
    for k, v in defaults.items():
        if not isinstance(v, dict):
            raise ScenarioError(f"'{k}' must be a table")
    for e in exps:
        if not isinstance(e, dict) or "pipeline" not in e:
            raise ScenarioError("each experiment needs a 'pipeline'")
        if e["pipeline"] not in REGISTRY:
            raise ScenarioError(f"unknown pipeline {e['pipeline']!r}; known: {', '.join(sorted(REGISTRY))}")
    sc = Scenario(name, seed, defaults, tuple(exps), d, str(d.get("description", "")))
    for e in exps:
        # resolve every grid eagerly so bad sizes are configuration errors
        g = sc.section(e, "grid")
        if g:
            build_grid(g)
    return sc


def build_grid(spec: dict) -> ConfigGrid:
    try:
        return ConfigGrid(
            int(spec.get("n_particles", 2)),
            int(spec.get("dim", 1)),
            spec.get("lo", -8.0),
            spec.get("hi", 8.0),
            spec.get("points", 64),
            bool(spec.get("periodic", True)),
        )
    except (ConfigSpaceError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid grid: {exc}") from exc


def build_potential(spec: dict, grid: ConfigGrid) -> dynamics.Potential:
    """Potential from a spec; ``hard_wall`` adds a steep confining wall near the box edges."""
    kind = spec.get("kind", "harmonic")
    if kind == "harmonic":
        V = dynamics.harmonic(grid, float(spec.get("omega", 1.0)))
    elif kind == "double-well":
        V = dynamics.double_well(grid, float(spec.get("a", 1.5)), float(spec.get("depth", 1.0)))
    elif kind == "free":
        V = dynamics.free(grid)
    elif kind == "polynomial":
        coeffs = spec.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            raise ScenarioError("polynomial potential needs a 'coeffs' list")
        V = dynamics.polynomial(grid, [float(c) for c in coeffs])
    else:
        raise ScenarioError(f"unknown potential {kind!r}; known: {', '.join(POTENTIALS)}")
    if spec.get("hard_wall", False):
        height = float(spec.get("wall_height", 1e4))
        margin = float(spec.get("wall_margin", 0.5))
        lo, hi = np.array(grid.lo), np.array(grid.hi)

        def wall(x):
            out = np.zeros(x.shape[1:])
            for c in range(x.shape[0]):
                out = out + height * ((x[c] < lo[c] + margin) | (x[c] > hi[c] - margin))
            return out

        Vw = dynamics.one_body_potential(grid, wall)
        V = dynamics.Potential(grid, V.values + Vw.values, symmetric=True)
    return V


def _packet(x: np.ndarray, p: dict) -> np.ndarray:
    orb = states.gaussian_packet(x, float(p.get("x0", 0.0)), float(p.get("k0", 0.0)), float(p.get("sigma", 2**-0.5)))
    chirp = float(p.get("chirp", 0.0))
    return orb * np.exp(0.5j * chirp * x**2) if chirp else orb


def build_initial_state(spec: dict, grid: ConfigGrid, potential_spec: dict | None = None) -> WaveField:
    """Normalised initial state; a requested symmetrisation is confirmed by classification.

    Antisymmetrising identical modes raises ``wavefield.ZeroNormError`` (exclusion).
    """
    kind = spec.get("kind", "harmonic")
    mode = spec.get("symmetrization", "none")
    if mode not in SYMMETRIZATION:
        raise ScenarioError(f"symmetrization must be one of {SYMMETRIZATION}")
    try:
        if kind == "harmonic":
            modes = [int(m) for m in spec.get("modes", [0] * grid.n_particles)]
            if len(modes) != grid.n_particles or grid.dim != 1:
                raise ScenarioError("harmonic state needs one mode per particle on a 1D grid")
            psi = states.harmonic_product(grid, modes, float(spec.get("omega", 1.0)))
        elif kind == "eigenstate":
            # stationary under the split-operator step, built from its one-body eigenvectors
            modes = [int(m) for m in spec.get("modes", [0] * grid.n_particles)]
            if grid.dim != 1 or len(modes) != grid.n_particles:
                raise ScenarioError("eigenstate needs one mode per particle on a 1D grid")
            one = ConfigGrid(1, 1, grid.lo, grid.hi, grid.points, grid.periodic)
            V1 = build_potential(potential_spec or {}, one)
            _, S = dynamics.propagator_eigenstates(one, V1, float(spec.get("dt", 0.01)), max(modes) + 1)
            psi = states.product_state(grid, [S[m] for m in modes]).normalized()
        elif kind == "packets":
            pk = spec.get("packets")
            if not isinstance(pk, list) or len(pk) != grid.n_particles or grid.dim != 1:
                raise ScenarioError("packets state needs one packet table per particle on a 1D grid")
            x = grid.spatial_axes[0]
            psi = states.product_state(grid, [_packet(x, p) for p in pk]).normalized()
        elif kind == "pwave-2d":
            psi = states.pwave_pair(grid, int(spec.get("winding", 1)))
        elif kind == "gaussian-pair-2d":
            psi = states.gaussian_pair(grid, tuple(spec.get("k_cm", (0.0, 0.0))))
        elif kind == "two-mode-asymmetric":
            psi = states.two_mode_asymmetric(
                grid, float(spec.get("k0", 1.0)), float(spec.get("k1", -1.0)), float(spec.get("shift", 1.0))
            )
        else:
            raise ScenarioError(f"unknown state kind {kind!r}; known: {', '.join(STATE_KINDS)}")
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"cannot build state {kind!r}: {exc}") from exc
    if mode == "sym":
        psi = symmetrize(psi)
        want = SymmetryClass.SYMMETRIC
    elif mode == "antisym":
        psi = antisymmetrize(psi)  # ZeroNormError for identical modes
        want = SymmetryClass.ANTISYMMETRIC
    else:
        return psi
    got = classify_symmetry(psi).cls
    if got is not want:
        raise ScenarioError(f"symmetrisation produced {got.value}, expected {want.value}")
    return psi
