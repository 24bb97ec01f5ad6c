"""Registered experiment pipelines.

Every pipeline takes an :class:`ExperimentContext` and returns an
:class:`ExperimentResult` whose checks each carry a value, a tolerance and a
pass flag. Artifacts are written only when the context has an output
directory.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import bohm, dynamics, io, miw, paths, states, svg, topology
from .configspace import ConfigGrid, ConfigSpaceError
from .sampling import l1_distance
from .scenario import Scenario, ScenarioError, build_grid, build_initial_state, build_potential
from .wavefield import (
    SymmetryClass,
    WaveField,
    ZeroNormError,
    classify_symmetry,
    mixed_parity_check,
    mixed_parity_projection,
    symmetrize,
    antisymmetrize,
)

TWO_PI = 2 * np.pi

CONFIG_ERRORS = (ScenarioError, ConfigSpaceError, ZeroNormError, topology.AnyonDimensionError)
NUMERICAL_ERRORS = (
    ArithmeticError,
    RuntimeError,
    paths.MaskedPathError,
    bohm.NodeError,
    dynamics.MaskedRegionError,
    miw.QuantizationViolation,
    topology.NonLiftableError,
    ValueError,
)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    relation: str  # "<" or ">"
    passed: bool

    @classmethod
    def below(cls, name: str, value: float, tol: float) -> "Check":
        v = float(value)
        return cls(name, v, float(tol), "<", bool(np.isfinite(v) and v < tol))

    @classmethod
    def above(cls, name: str, value: float, tol: float) -> "Check":
        v = float(value)
        return cls(name, v, float(tol), ">", bool(np.isfinite(v) and v > tol))

    @classmethod
    def truth(cls, name: str, ok: bool) -> "Check":
        return cls(name, float(bool(ok)), 1.0, "==", bool(ok))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "tolerance": self.tolerance,
            "relation": self.relation,
            "status": "pass" if self.passed else "fail",
        }


@dataclass
class ExperimentResult:
    id: str
    pipeline: str
    checks: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    error: str | None = None
    error_kind: str | None = None  # "config" or "numerical"
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "pipeline": self.pipeline,
            "status": "pass" if self.passed else ("error" if self.error else "fail"),
            "checks": [c.to_dict() for c in self.checks],
            "values": self.values,
            "artifacts": sorted(self.artifacts),
            "error": self.error,
            "error_kind": self.error_kind,
        }


@dataclass
class ExperimentContext:
    scenario: Scenario
    spec: dict
    index: int
    seed: int
    out_dir: Path | None = None

    @property
    def id(self) -> str:
        return self.spec.get("id", f"{self.index:02d}-{self.spec['pipeline']}")

    def param(self, key: str, default=None):
        return self.spec.get(key, default)

    def section(self, key: str) -> dict:
        return self.scenario.section(self.spec, key)

    def grid(self) -> ConfigGrid:
        return build_grid(self.section("grid"))

    def potential(self, grid: ConfigGrid) -> dynamics.Potential:
        return build_potential(self.section("potential"), grid)

    def state(self, grid: ConfigGrid, override: dict | None = None) -> WaveField:
        spec = self.section("state")
        if override:
            spec = {**spec, **override}
        return build_initial_state(spec, grid, self.section("potential"))

    def evolution(self) -> dict:
        return self.section("evolution")

    def path(self, name: str) -> Path | None:
        """Artifact path inside this experiment's directory (None when not writing)."""
        if self.out_dir is None:
            return None
        d = self.out_dir / self.id
        d.mkdir(parents=True, exist_ok=True)
        return d / name


Pipeline = Callable[[ExperimentContext, ExperimentResult], None]
REGISTRY: dict[str, Pipeline] = {}


def pipeline(name: str):
    def deco(fn):
        REGISTRY[name] = fn
        return fn

    return deco


def run_experiment(ctx: ExperimentContext) -> ExperimentResult:
    res = ExperimentResult(ctx.id, ctx.spec["pipeline"])
    t0 = time.perf_counter()
    try:
        REGISTRY[ctx.spec["pipeline"]](ctx, res)
    except CONFIG_ERRORS as exc:
        res.error, res.error_kind = f"{type(exc).__name__}: {exc}", "config"
    except NUMERICAL_ERRORS as exc:
        res.error, res.error_kind = f"{type(exc).__name__}: {exc}", "numerical"
    res.wall_time = time.perf_counter() - t0
    return res


def _artifact(ctx: ExperimentContext, res: ExperimentResult, name: str, writer, *args, **kw):
    p = ctx.path(name)
    if p is not None:
        writer(p, *args, **kw)
        res.artifacts.append(f"{ctx.id}/{name}")


def _svg(ctx, res, name, values, grid, style, **kw):
    p = ctx.path(name)
    if p is not None:
        svg.write_svg(p, svg.render_heatmap(values, grid, style, **kw))
        res.artifacts.append(f"{ctx.id}/{name}")


def _state_list(ctx: ExperimentContext, default: list[dict]) -> list[dict]:
    items = ctx.param("states", default)
    if not isinstance(items, list) or not items:
        raise ScenarioError("'states' must be a non-empty list of state tables")
    return items


# --- symmetry preservation ------------------------------------------------------------


@pipeline("symmetry-preservation")
def symmetry_preservation(ctx: ExperimentContext, res: ExperimentResult):
    """Evolve definite-parity states and track the opposite-parity residual."""
    grid = ctx.grid()
    V = ctx.potential(grid)
    ev = ctx.evolution()
    dt, steps = float(ev.get("dt", 0.01)), int(ev.get("steps", 1000))
    dump = int(ev.get("dump_every", max(1, steps // 10)))
    tol = float(ctx.param("tol", 1e-6))
    default = [
        {"kind": "harmonic", "modes": [0, 1], "symmetrization": "antisym", "label": "antisym"},
        {"kind": "harmonic", "modes": [0, 1], "symmetrization": "sym", "label": "sym"},
    ]
    for k, spec in enumerate(_state_list(ctx, default)):
        label = spec.get("label", f"state{k}")
        psi0 = ctx.state(grid, spec)
        cls = classify_symmetry(psi0).cls
        if cls is SymmetryClass.ASYMMETRIC:
            raise ScenarioError(f"state {label!r} has no definite parity")
        rec = dynamics.propagate(psi0, V, dt, steps, dump)
        drift = dynamics.symmetry_drift(rec)
        key = "s_minus" if cls is SymmetryClass.ANTISYMMETRIC else "s_plus"
        worst = float(np.max(drift.s_minus if key == "s_minus" else drift.s_plus))
        res.checks.append(Check.below(f"{label}.max_{key}", worst, tol))
        res.values[label] = {"class": cls.value, "steps": steps, "dt": dt, f"max_{key}": worst}
        rows = dynamics.time_series(rec)
        cols = ["step", "t", "norm", "energy", "s_plus", "s_minus"]
        _artifact(ctx, res, f"{label}_timeseries.csv", io.write_csv, cols, [[r[c] for c in cols] for r in rows])
        for i, snap in enumerate(rec.snapshots[:: max(1, len(rec.snapshots) - 1)]):
            _artifact(ctx, res, f"{label}_snapshot{i}.wf", io.write_wavefield, snap)
        if grid.D == 2:
            _svg(ctx, res, f"{label}_density.svg", rec.snapshots[-1].amplitudes, grid, "magnitude", title=label)


# --- unlinked guidance consistency ---------------------------------------------------


@pipeline("unlinked-consistency")
def unlinked_consistency(ctx: ExperimentContext, res: ExperimentResult):
    grid = ctx.grid()
    tol = float(ctx.param("tol", 1e-6))
    floor = float(ctx.param("asymmetric_min", 0.1))
    default = [
        {"kind": "harmonic", "modes": [0, 1], "symmetrization": "antisym", "label": "antisym"},
        {
            "kind": "packets",
            "packets": [{"x0": 1.0}, {"x0": -0.5, "k0": 0.3}],
            "symmetrization": "sym",
            "label": "sym",
        },
        {"kind": "two-mode-asymmetric", "label": "asym"},
    ]
    rows, reports = [], []
    for k, spec in enumerate(_state_list(ctx, default)):
        label = spec.get("label", f"state{k}")
        psi = ctx.state(grid, spec)
        cls = classify_symmetry(psi).cls
        r = bohm.consistency_residual(psi)
        rows.append([label, cls.value, r.residual, r.probe_count])
        reports.append(bohm.disagreement_report(psi, label))
        res.values[label] = {"class": cls.value, "residual": r.residual, "argmax_point": r.argmax_point}
        if cls is SymmetryClass.ASYMMETRIC:
            res.checks.append(Check.above(f"{label}.residual", r.residual, floor))
        else:
            res.checks.append(Check.below(f"{label}.residual", r.residual, tol))
    _artifact(ctx, res, "residuals.csv", io.write_csv, ["state_id", "class", "residual", "probe_count"], rows)
    _artifact(ctx, res, "disagreement.json", io.write_json, reports)


# --- exchange phase and quantization ------------------------------------------------------


def _homotopy_paths(radius: float = 1.0) -> list[paths.PathPolyline]:
    return [
        paths.relative_loop(0.5, radius, path_id="circle"),
        paths.relative_loop(0.5, 1.2 * radius, (0.2, 0.1), start_angle=0.7, radial_wobble=0.2, path_id="wobbled"),
        paths.relative_loop(0.5, 0.8 * radius, (-0.1, 0.0), start_angle=2.0, cm_wobble=(0.3, 0.2), path_id="cm-shifted"),
    ]


def _pair_states(ctx: ExperimentContext, grid: ConfigGrid):
    default = [
        {"kind": "pwave-2d", "label": "pwave", "expect": "fermionic"},
        {"kind": "gaussian-pair-2d", "k_cm": [0.3, 0.0], "label": "gaussian", "expect": "bosonic"},
    ]
    out = []
    for k, spec in enumerate(_state_list(ctx, default)):
        out.append((spec.get("label", f"state{k}"), spec.get("expect"), ctx.state(grid, spec)))
    return out


def _slice_overlay(grid: ConfigGrid, ps):
    """Show particle 2's plane with particle 1 at the grid centre."""
    mid = tuple((a, grid.points[a % grid.dim] // 2) for a in range(grid.dim))
    return svg.SliceSpec((grid.dim, grid.dim + 1), mid), [(p, "solid" if i == 0 else "dotted") for i, p in enumerate(ps)]


@pipeline("winding")
def winding(ctx: ExperimentContext, res: ExperimentResult):
    """Exchange phase from half loops, homotopy invariance, and doubled loops."""
    grid = ctx.grid()
    tol = float(ctx.param("tol", 1e-3))
    dtol = float(ctx.param("doubled_tol", 2e-3))
    ps = _homotopy_paths(float(ctx.param("radius", 1.0)))
    table = []
    for label, expect, psi in _pair_states(ctx, grid):
        summary, spread = topology.homotopy_phases(psi, ps, tol, require_liftable=False)
        target = {"fermionic": np.pi, "bosonic": 0.0}.get(expect)
        for p, alpha in zip(ps, summary.homotopy_witnesses):
            ph = topology.half_loop_phase(psi, p, tol, require_liftable=False)
            table.append([label, p.path_id, ph.raw_integral, ph.alpha, ph.doubled_integral, ph.kind.value])
            off2 = abs(ph.doubled_integral - TWO_PI * round(ph.doubled_integral / TWO_PI))
            res.checks.append(Check.below(f"{label}.{p.path_id}.doubled_offset", off2, dtol))
            if target is not None:
                d = abs(np.angle(np.exp(1j * (alpha - target))))
                res.checks.append(Check.below(f"{label}.{p.path_id}.alpha_error", d, tol))
        res.checks.append(Check.below(f"{label}.homotopy_spread", spread, tol))
        verdict = topology.dichotomy_check(summary, tol)
        res.values[label] = {**summary.to_dict(), "spread": spread, "definite": verdict.definite}
        _artifact(ctx, res, f"{label}_phase.json", io.write_json, summary.to_dict())
        if grid.D == 4:
            spec, overlay = _slice_overlay(grid, ps)
            _svg(ctx, res, f"{label}_phase.svg", psi.amplitudes, grid, "phase", slice_spec=spec, paths=overlay, title=label)
    _artifact(
        ctx, res, "half_loops.csv", io.write_csv,
        ["state_id", "path_id", "integral", "alpha", "doubled_integral", "classification"], table,
    )


@pipeline("quantization")
def quantization(ctx: ExperimentContext, res: ExperimentResult):
    """Momentum loop integrals in units of h on flows taken from pair states."""
    grid = ctx.grid()
    tol = float(ctx.param("tol", 1e-3))
    radius = float(ctx.param("radius", 1.0))
    rows = []
    for label, expect, psi in _pair_states(ctx, grid):
        flow = miw.flow_from_wavefield(psi)
        winds = 1 if expect == "fermionic" else 0
        loop = paths.relative_loop(1.0, radius, path_id="relative-circle")
        q1 = miw.quantization_check(flow, loop)
        q2 = miw.quantization_check(flow, loop.repeated(2))
        # particle 1 circles its own spot, particle 2 stays outside: contractible, node free
        off = paths.offset_loop((-0.75, 0.0, 0.75, 0.0), 0.5, axes=(0, 1), path_id="offset-circle")
        q0 = miw.quantization_check(flow, off)
        half = topology.reduced_quantization_check(flow, paths.relative_loop(0.5, radius, path_id="half"))
        res.checks += [
            Check.below(f"{label}.loop_error", abs(q1.integral - winds), tol),
            Check.below(f"{label}.double_loop_error", abs(q2.integral - 2 * winds), 2 * tol),
            Check.below(f"{label}.contractible_error", abs(q0.integral), tol),
            Check.below(f"{label}.half_loop_error", abs(half.integral - winds / 2), tol),
        ]
        for name, q in (("relative-circle", q1), ("relative-circle-x2", q2), ("offset-circle", q0)):
            rows.append([label, name, q.integral, q.n, q.deviation, "h"])
        rows.append([label, "half", half.integral, half.n, half.deviation, half.unit])
        res.values[label] = {
            "loop_h": q1.integral,
            "double_loop_h": q2.integral,
            "contractible_h": q0.integral,
            "half_loop_h": half.integral,
            "half_loop_units": f"{half.n} x {half.unit}",
        }
    _artifact(ctx, res, "loops.csv", io.write_csv, ["state_id", "loop", "integral_h", "n", "deviation", "unit"], rows)


# --- emergent parity pipeline ------------------------------------------------------------


@pipeline("dichotomy-pipeline")
def dichotomy_pipeline(ctx: ExperimentContext, res: ExperimentResult):
    """sample -> build_flow -> reconstruct -> classify, compared with the source state."""
    grid = ctx.grid()
    psi = ctx.state(grid)
    M = int(ctx.param("worlds", 10_000))
    tol_cls = float(ctx.param("class_tol", 1e-2))
    tol_l1 = float(ctx.param("kde_l1_tol", 0.05))
    src = classify_symmetry(psi, tol_cls)
    e = miw.sample_ensemble(psi, M, ctx.seed)
    bw = ctx.param("bandwidth")
    flow = miw.build_flow(e, grid, bw)
    rho = np.abs(psi.amplitudes) ** 2 / psi.norm**2
    l1 = l1_distance(flow.rho, rho, grid)
    rec = miw.reconstruct_wavefunction(flow)
    out = classify_symmetry(rec.psi, tol_cls)
    resid = out.s_plus if src.cls is SymmetryClass.SYMMETRIC else out.s_minus
    res.checks += [
        Check.below("kde_l1", l1, tol_l1),
        Check.truth("class_match", out.cls is src.cls),
        Check.below("class_residual", resid, tol_cls),
    ]
    res.values.update(
        {
            "source_class": src.cls.value,
            "reconstructed_class": out.cls.value,
            "s_plus": out.s_plus,
            "s_minus": out.s_minus,
            "fidelity": rec.psi.fidelity(psi),
            "closure_deviation_h": rec.max_closure_deviation,
            "components": rec.components,
            "bandwidth": flow.bandwidth,
            "worlds": M,
        }
    )
    _artifact(ctx, res, "ensemble.jsonl", io.write_jsonl, e.jsonl_records())
    _artifact(ctx, res, "flow_rho.wf", io.write_wf, grid, flow.rho, kind="flow", component="rho")
    for a in range(grid.D):
        _artifact(ctx, res, f"flow_v{a}.wf", io.write_wf, grid, np.nan_to_num(flow.velocity()[a]), kind="flow", component=f"v{a}")
    _artifact(ctx, res, "reconstructed.wf", io.write_wavefield, rec.psi)
    if grid.D == 2:
        _svg(ctx, res, "reconstructed_phase.svg", rec.psi.amplitudes, grid, "phase")


@pipeline("reconstruction-roundtrip")
def reconstruction_roundtrip(ctx: ExperimentContext, res: ExperimentResult):
    """Analytic flows: fidelity of the reconstruction and detection of a violated quantization."""
    grid = ctx.grid()
    fid_min = float(ctx.param("fidelity_min", 0.999))
    tol_cls = float(ctx.param("class_tol", 1e-2))
    scale = float(ctx.param("violation_scale", 1.37))
    for label, expect, psi in _pair_states(ctx, grid):
        flow = miw.flow_from_wavefield(psi)
        rec = miw.reconstruct_wavefunction(flow)
        src = classify_symmetry(psi, tol_cls).cls
        got = classify_symmetry(rec.psi, tol_cls).cls
        fid = rec.psi.fidelity(psi)
        res.checks += [Check.above(f"{label}.fidelity", fid, fid_min), Check.truth(f"{label}.class_match", got is src)]
        detected = None
        try:
            miw.reconstruct_wavefunction(flow.scaled(scale))
            detected = False
        except miw.QuantizationViolation as exc:
            detected = True
            res.values[f"{label}.violation"] = {"deviation_h": exc.deviation, "loop_points": len(exc.loop)}
        if expect == "fermionic":
            # scaled winding flows cannot close; curl-free scaled flows still can
            res.checks.append(Check.truth(f"{label}.violation_detected", detected))
        res.values[label] = {
            "fidelity": fid,
            "source_class": src.value,
            "reconstructed_class": got.value,
            "closure_deviation_h": rec.max_closure_deviation,
            "scaled_flow_violation": detected,
        }
        _artifact(ctx, res, f"{label}_reconstructed.wf", io.write_wavefield, rec.psi)


# --- MIW stationarity and continuity ------------------------------------------------


@pipeline("stationarity")
def stationarity(ctx: ExperimentContext, res: ExperimentResult):
    grid = ctx.grid()
    V = ctx.potential(grid)
    psi = ctx.state(grid)
    acc_tol = float(ctx.param("acceleration_tol", 1e-4))
    drift_tol = float(ctx.param("drift_tol", 1e-3))
    ev = ctx.evolution()
    dt, steps = float(ev.get("dt", 1e-3)), int(ev.get("steps", 100))
    M = int(ctx.param("worlds", 10_000))
    rho = np.abs(psi.amplitudes) ** 2 / psi.norm**2
    a = miw.quantum_force(rho, V)
    core = rho > float(ctx.param("probe_rel", 1e-3)) * rho.max()
    amax = float(np.nanmax(np.abs(a[:, core])))
    e = miw.sample_ensemble(psi, M, ctx.seed)
    vmax = float(np.abs(e.velocities).max())
    run = miw.evolve_ensemble(e, V, dt, steps, keep_positions=True)
    cdrift = float(np.abs(run.centroids - run.centroids[0]).max())
    disp = np.abs(run.positions[-1] - run.positions[0]).max(axis=1)
    res.checks += [
        Check.below("max_acceleration", amax, acc_tol),
        Check.below("centroid_drift", cdrift, drift_tol),
    ]
    res.values.update(
        {
            "initial_max_speed": vmax,
            "median_world_displacement": float(np.median(disp)),
            "max_world_displacement": float(disp.max()),
            "frozen_fraction": run.frozen_fraction,
            "bandwidth": run.bandwidth,
            "worlds": M,
            "t_final": float(run.times[-1]),
        }
    )
    D = grid.D
    _artifact(
        ctx, res, "centroids.csv", io.write_csv, ["step", "t"] + [f"c{i + 1}" for i in range(D)],
        [[k, t, *c] for k, (t, c) in enumerate(zip(run.times, run.centroids))],
    )


@pipeline("equivariance")
def equivariance(ctx: ExperimentContext, res: ExperimentResult):
    """Bohmian ensemble transported through |Psi(t)|^2 over the run."""
    grid = ctx.grid()
    V = ctx.potential(grid)
    psi = ctx.state(grid)
    ev = ctx.evolution()
    dt, steps = float(ev.get("dt", 0.01)), int(ev.get("steps", 629))
    dump = int(ev.get("dump_every", 10))
    M = int(ctx.param("samples", 10_000))
    tol = float(ctx.param("tol", 0.05))
    rec = dynamics.propagate(psi, V, dt, steps, dump)
    r = bohm.equivariance_test(rec, M, ctx.seed, every=int(ctx.param("every", 7)))
    res.checks.append(Check.below("max_l1", float(r.l1.max()), tol))
    res.values.update(
        {"l1": r.l1, "times": r.times, "failure_fraction": r.failure_fraction, "samples": M, "bandwidth": r.bandwidth}
    )
    if ctx.out_dir is not None:
        rng = np.random.default_rng(ctx.seed + 1)
        from .sampling import draw_configs

        starts = draw_configs(np.abs(psi.amplitudes) ** 2, grid, int(ctx.param("trajectories", 16)), rng)
        tr = bohm.transport(rec, starts)
        _artifact(
            ctx, res, "trajectories.csv", io.write_csv,
            ["sample_id", "step", "t"] + [f"x{i + 1}" for i in range(grid.D)], tr.csv_rows(),
        )


@pipeline("continuity")
def continuity(ctx: ExperimentContext, res: ExperimentResult):
    """MIW ensemble from a coherent state: continuity residual and centroid versus the classical orbit."""
    grid = ctx.grid()
    V = ctx.potential(grid)
    psi = ctx.state(grid)
    ev = ctx.evolution()
    omega = float(ctx.section("potential").get("omega", 1.0))
    period = TWO_PI / omega
    dt = float(ev.get("dt", 0.04))
    steps = int(ev.get("steps", round(period / dt)))
    M = int(ctx.param("worlds", 10_000))
    tol = float(ctx.param("tol", 0.1))
    rel_tol = float(ctx.param("centroid_rel_tol", 0.02))
    e = miw.sample_ensemble(psi, M, ctx.seed)
    run = miw.evolve_ensemble(e, V, dt, steps, keep_flows=True)
    cr = miw.continuity_residual(run.flows)
    per = cr.per_period(period)
    # classical orbit of the ensemble mean
    c0 = e.positions.mean()
    v0 = e.velocities.mean()
    ref = c0 * np.cos(omega * run.times) + v0 / omega * np.sin(omega * run.times)
    cm = run.centroids.mean(axis=1)
    amp = max(np.hypot(c0, v0 / omega), 1e-12)
    err = float(np.abs(cm - ref).max() / amp)
    res.checks += [Check.below("continuity_per_period", per, tol), Check.below("centroid_rel_error", err, rel_tol)]
    res.values.update({"frozen_fraction": run.frozen_fraction, "worlds": M, "dt": dt, "steps": steps})
    _artifact(
        ctx, res, "continuity.csv", io.write_csv, ["t", "l1"], [[t, v] for t, v in zip(cr.times, cr.l1)]
    )


# --- Pauli node ---------------------------------------------------------------------------


@pipeline("pauli-node")
def pauli_node(ctx: ExperimentContext, res: ExperimentResult):
    grid = ctx.grid()
    V = ctx.potential(grid)
    psi = ctx.state(grid)
    ev = ctx.evolution()
    dt, steps = float(ev.get("dt", 0.01)), int(ev.get("steps", 1000))
    tol = float(ctx.param("tol", 1e-10))
    n0 = topology.coincidence_node_check(psi)
    if not n0.applicable:
        raise ScenarioError("pauli-node needs an antisymmetric initial state")
    rec = dynamics.propagate(psi, V, dt, steps, steps)
    n1 = topology.coincidence_node_check(rec.snapshots[-1])
    res.checks += [Check.below("node_ratio_initial", n0.ratio, tol), Check.below("node_ratio_final", n1.ratio, tol)]
    if grid.D == 2:
        _svg(ctx, res, "density_final.svg", rec.snapshots[-1].amplitudes, grid, "magnitude", title="final density")
    # shrink study on the 2D pair state
    pg = build_grid(ctx.param("pair_grid", {"n_particles": 2, "dim": 2, "lo": -4.0, "hi": 4.0, "points": 32}))
    radii = tuple(float(r) for r in ctx.param("radii", [1.0, 0.5, 0.25]))
    flow = miw.flow_from_wavefield(states.pwave_pair(pg))
    study = topology.shrink_loop_study(flow, radii)
    spread = float(np.max(np.abs(np.array(study.integrals) - study.integrals[0])))
    mins = np.array(study.min_density)
    res.checks += [
        Check.below("winding_spread_h", spread, float(ctx.param("winding_tol", 1e-3))),
        Check.truth("density_decreases", bool(np.all(np.diff(mins) < 0))),
    ]
    res.values.update(
        {
            "ratio_initial": n0.ratio,
            "ratio_final": n1.ratio,
            "shrink_radii": study.radii,
            "shrink_integrals_h": study.integrals,
            "shrink_min_density": study.min_density,
        }
    )
    _artifact(
        ctx, res, "shrink.csv", io.write_csv, ["radius", "integral_h", "min_density"],
        [[r, i, m] for r, i, m in zip(study.radii, study.integrals, study.min_density)],
    )


# --- mixed parity ------------------------------------------------------------------------


@pipeline("mixed-parity")
def mixed_parity(ctx: ExperimentContext, res: ExperimentResult):
    grid = ctx.grid()
    if grid.n_particles < 4:
        raise ScenarioError("mixed-parity needs at least four particles")
    route_tol = float(ctx.param("route_tol", 1e-9))
    proj_tol = float(ctx.param("projection_tol", 1e-12))
    rng = np.random.default_rng(ctx.seed)
    raw = WaveField(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)).normalized()
    for label, psi in (("symmetric", symmetrize(raw)), ("antisymmetric", antisymmetrize(raw))):
        v = mixed_parity_check(psi, (0, 1), (2, 3))
        res.checks += [
            Check.below(f"{label}.route_difference", v.route_difference, route_tol),
            Check.truth(f"{label}.signs_consistent", v.consistent),
        ]
        res.values[label] = {"route_difference": v.route_difference, "signs": {f"{a}{b}": s for (a, b), s in v.signs.items()}}
    proj = mixed_parity_projection(raw, (0, 1), (2, 3))
    res.checks.append(Check.below("mixed_projection_norm", proj, proj_tol))
    res.values["mixed_projection_norm"] = proj


# --- anyons --------------------------------------------------------------------------


@pipeline("anyon-gate")
def anyon_gate(ctx: ExperimentContext, res: ExperimentResult):
    grid = ctx.grid()
    tol = float(ctx.param("tol", 2e-3))
    alphas = [float(a) for a in ctx.param("alphas_over_pi", [0.0, 1.0, 0.3])]
    rows = []
    for a in alphas:
        alpha = a * np.pi
        r = topology.anyon_report(alpha, grid)
        definite = min(a % 2.0, 2.0 - a % 2.0) < 1e-12 or abs(a % 2.0 - 1.0) < 1e-12
        key = f"alpha={a:g}pi"
        res.checks += [
            Check.truth(f"{key}.lift_matches_dichotomy", r.lift == definite and r.loop_liftable == definite),
            Check.below(f"{key}.doubled_error", abs(r.doubled_integral - 2 * alpha), tol),
        ]
        rows.append([a, r.alpha_extracted, r.doubled_integral, r.loop_liftable, r.lift, r.seam_mismatch])
        res.values[key] = {
            "alpha_extracted": r.alpha_extracted,
            "doubled_integral": r.doubled_integral,
            "loop_liftable": r.loop_liftable,
            "lift": r.lift,
            "seam_mismatch": r.seam_mismatch,
        }
    refused = False
    try:
        topology.check_anyon_dimension(int(ctx.param("refuse_dim", 3)))
    except topology.AnyonDimensionError as exc:
        refused = True
        res.values["d3_refusal"] = str(exc)
    res.checks.append(Check.truth("d3_refused", refused))
    _artifact(
        ctx, res, "anyons.csv", io.write_csv,
        ["alpha_over_pi", "alpha_extracted", "doubled_integral", "loop_liftable", "lift", "seam_mismatch"], rows,
    )


# --- Madelung -----------------------------------------------------------------------


@pipeline("madelung")
def madelung(ctx: ExperimentContext, res: ExperimentResult):
    grid = ctx.grid()
    V = ctx.potential(grid)
    psi = ctx.state(grid)
    ev = ctx.evolution()
    dt0 = float(ev.get("dt", 0.01))
    t_end = float(ev.get("t_end", 0.4))
    probe_t = float(ctx.param("probe_time", t_end / 2))
    tol = float(ctx.param("tol", 1e-3))
    rows, theta, cont = [], [], []
    dts = [2 * dt0, dt0, dt0 / 2]
    for dt in dts:
        rec = dynamics.propagate(psi, V, dt, int(round(t_end / dt)))
        th = dynamics.madelung_theta_residual(rec)
        co = dynamics.madelung_continuity_residual(rec)
        i = int(np.argmin(np.abs(th.times - probe_t)))
        theta.append(float(th.max_rel[i]))
        cont.append(float(co.max_rel[i]))
        rows.append([dt, theta[-1], cont[-1], th.worst_rel, co.worst_rel])
    order_th = float(np.log2(theta[1] / theta[2]))
    order_co = float(np.log2(cont[1] / cont[2]))
    lo, hi = 1.8, 2.2
    res.checks += [
        Check.below("theta_residual", theta[1], tol),
        Check.below("continuity_residual", cont[1], tol),
        Check.truth("theta_second_order", lo < order_th < hi),
        Check.truth("continuity_second_order", lo < order_co < hi),
    ]
    res.values.update({"dts": dts, "theta": theta, "continuity": cont, "order_theta": order_th, "order_continuity": order_co})
    _artifact(
        ctx, res, "madelung.csv", io.write_csv, ["dt", "theta_rel", "continuity_rel", "theta_worst", "continuity_worst"], rows
    )
