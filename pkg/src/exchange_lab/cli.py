"""``exchange-lab`` command line entry point.

Exit codes: 0 every check passed, 1 a tolerance check failed, 2 the
scenario or arguments are invalid, 3 a numerical failure stopped a pipeline.
"""
from __future__ import annotations

import argparse
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__, io, svg
from .experiments import ExperimentContext, ExperimentResult, run_experiment
from .scenario import Scenario, ScenarioError, bundled_names, load

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
THREADS_ENV = "EXCHANGE_LAB_THREADS"


def resolve_threads(cli_value: int | None) -> int | None:
    """The environment variable wins over ``--threads``."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            k = int(env)
        except ValueError:
            raise ScenarioError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    else:
        k = cli_value
    if k is not None and k < 1:
        raise ScenarioError("thread count must be at least 1")
    return k


def exit_code(results: list[ExperimentResult]) -> int:
    kinds = {r.error_kind for r in results if r.error}
    if "config" in kinds:
        return EXIT_CONFIG
    if "numerical" in kinds:
        return EXIT_NUMERICAL
    return EXIT_OK if all(r.passed for r in results) else EXIT_TOLERANCE


def run_scenario(sc: Scenario, out_dir: Path | None) -> list[ExperimentResult]:
    results = []
    for i, spec in enumerate(sc.experiments):
        ctx = ExperimentContext(sc, spec, i, sc.seed, out_dir)
        results.append(run_experiment(ctx))
    return results


def build_report(sc: Scenario, results: list[ExperimentResult], threads: int | None) -> dict:
    """Deterministic report: no timings, no absolute paths."""
    return {
        "scenario": sc.name,
        "status": "pass" if exit_code(results) == EXIT_OK else "fail",
        "exit_code": exit_code(results),
        "experiments": [r.to_dict() for r in results],
        "provenance": {
            "config_hash": sc.config_hash,
            "seed": sc.seed,
            "threads": threads,
            "versions": {
                "exchange_lab": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
        },
    }


def format_text(report: dict, results: list[ExperimentResult], wall: float) -> str:
    lines = [f"scenario {report['scenario']}: {report['status'].upper()} (exit {report['exit_code']})"]
    for r in results:
        lines.append(f"  [{r.to_dict()['status'].upper():5s}] {r.id} ({r.pipeline}) {r.wall_time:.2f} s")
        if r.error:
            lines.append(f"      {r.error_kind} error: {r.error}")
        for c in r.checks:
            mark = "ok " if c.passed else "BAD"
            lines.append(f"      {mark} {c.name}: {c.value:.6g} {c.relation} {c.tolerance:.3g}")
    prov = report["provenance"]
    lines.append(f"config hash {prov['config_hash'][:16]}  seed {prov['seed']}  threads {prov['threads']}")
    lines.append(f"wall time {wall:.2f} s")
    return "\n".join(lines) + "\n"


def _load(ref: str, seed: int | None) -> Scenario:
    sc = load(ref)
    return sc.with_seed(seed) if seed is not None else sc


def cmd_run(args, verify: bool = False) -> int:
    try:
        threads = resolve_threads(args.threads)
        sc = _load(args.scenario, args.seed)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = None if verify else Path(args.out or Path("runs") / sc.name)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    with threadpool_limits(limits=threads):
        results = run_scenario(sc, out)
    wall = time.perf_counter() - t0
    report = build_report(sc, results, threads)
    text = format_text(report, results, wall)
    if out is not None:
        io.write_json(out / "report.json", report)
        (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return report["exit_code"]


def cmd_list(args) -> int:
    for name in bundled_names():
        sc = load(name)
        pipes = ", ".join(e["pipeline"] for e in sc.experiments)
        print(f"{name:24s} {sc.description} [{pipes}]")
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        grid, arr, header = io.read_wf(args.field)
        fixed = tuple((int(a), int(i)) for a, i in (s.split("=") for s in args.fix or []))
        spec = svg.SliceSpec(tuple(args.axes), fixed)
        text = svg.render_heatmap(
            arr, grid, "phase" if args.phase else "magnitude", spec, title=args.title or Path(args.field).name
        )
    except (OSError, io.FormatError, svg.SliceError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(args.field).with_suffix(".svg")
    svg.write_svg(out, text)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="exchange-lab", description="Exchange symmetry numerical experiments.")
    p.add_argument("--version", action="version", version=f"exchange-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    for name, hlp in (("run", "run a scenario and write artifacts"), ("verify", "run tolerance checks only")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("scenario", help="scenario file or bundled scenario name")
        s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        s.add_argument("--threads", type=int, default=None, help=f"BLAS/FFT threads ({THREADS_ENV} overrides)")
        if name == "run":
            s.add_argument("--out", default=None, help="output directory (default runs/<scenario>)")

    sub.add_parser("list-scenarios", help="list bundled scenarios")

    r = sub.add_parser("render", help="render a .wf field as an SVG heatmap")
    r.add_argument("field")
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--phase", action="store_true")
    mode.add_argument("--magnitude", action="store_true")
    r.add_argument("--axes", type=int, nargs=2, default=(0, 1), metavar=("A", "B"))
    r.add_argument("--fix", nargs="*", metavar="AXIS=INDEX", help="grid index for undisplayed axes")
    r.add_argument("--out", default=None)
    r.add_argument("--title", default=None)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "run":
        return cmd_run(args)
    if args.command == "verify":
        return cmd_run(args, verify=True)
    if args.command == "list-scenarios":
        return cmd_list(args)
    return cmd_render(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
