"""Acceptance criteria, one test per criterion.

Each test runs the bundled scenario that exercises the criterion, prints a
single ``PASS``/``FAIL`` line with the deciding numbers and the wall time,
and asserts both the tolerance checks and the time budget. Run directly
(``python tests/test_acceptance.py``) for the summary lines alone.
"""
from __future__ import annotations

import sys
import time

import pytest

from exchange_lab.experiments import ExperimentContext, run_experiment
from exchange_lab.scenario import load

# criterion -> (title, scenario, pipelines or None for all, budget in seconds)
CRITERIA = {
    1: ("parity preserved over 1e3 steps", "symmetry-preservation", None, 30),
    2: ("unlinked guidance consistency", "unlinked-consistency", None, 10),
    3: ("exchange phase from homotopic half loops", "winding", ["winding"], 20),
    4: ("momentum loop quantization", "winding", ["quantization"], 20),
    5: ("dichotomy from sampled worlds", "dichotomy-pipeline", None, 180),
    6: ("ground-state worlds stay at rest", "stationarity", None, 60),
    7: ("equivariance and world continuity", "equivariance", None, 180),
    8: ("Pauli node and shrinking loops", "pauli-node", None, 60),
    9: ("no mixed parity for four particles", "mixed-parity", None, 30),
    10: ("anyon gate needs two dimensions", "anyon-gate", None, 10),
    11: ("Madelung residuals at second order", "madelung", None, 60),
}


def _margin(c):
    if c.relation == "<":
        return c.value / c.tolerance if c.tolerance else float("inf")
    if c.relation == ">":
        return c.tolerance / c.value if c.value else float("inf")
    return 0.0 if c.passed else float("inf")


def evaluate(n: int):
    title, name, pipes, budget = CRITERIA[n]
    sc = load(name)
    t0 = time.perf_counter()
    results = [
        run_experiment(ExperimentContext(sc, spec, i, sc.seed))
        for i, spec in enumerate(sc.experiments)
        if pipes is None or spec["pipeline"] in pipes
    ]
    wall = time.perf_counter() - t0
    checks = [c for r in results for c in r.checks]
    errors = [r.error for r in results if r.error]
    ok = not errors and all(c.passed for c in checks) and wall < budget
    if errors:
        detail = "; ".join(errors)
    else:
        worst = max(checks, key=_margin)
        bad = [c.name for c in checks if not c.passed]
        detail = f"{len(checks)} checks, tightest {worst.name}={worst.value:.3g} ({worst.relation} {worst.tolerance:.3g})"
        if bad:
            detail += f"; failing: {', '.join(bad)}"
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {title}: {detail}; {wall:.1f} s (budget {budget} s)"
    return ok, line


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, line = evaluate(n)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    status = 0
    for n in sorted(CRITERIA):
        ok, line = evaluate(n)
        print(line, flush=True)
        status |= not ok
    sys.exit(status)
