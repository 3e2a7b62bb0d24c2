"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
repeated in the terminal summary section.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from hesslab.audit import (
    cns_implies_d_suite,
    k_hessian_bridge_suite,
    newton_suite,
    operator_audit,
    operator_family,
    pma_bridge_suite,
    splitting_suite,
)
from hesslab.grid import DomainSpec
from hesslab.harness import (
    blowdown,
    c0_check,
    hessian_equivariance_defect,
    liouville_probe,
    quadratic_source,
    refinement_study,
    subsolution_gap,
)
from hesslab.operators import (
    OperatorSpec,
    condition_n_constants,
    condition_n_margin,
    estimate_garding_d,
    sample_admissible,
)
from hesslab.solver import solve

DISK = DomainSpec.unit_ball(2)
MA2 = OperatorSpec.monge_ampere(2)
DISK_HS = (1 / 16, 1 / 32, 1 / 64)


def record(number: int, ok: bool, text: str, elapsed: float, limit: float | None) -> None:
    ok = ok and (limit is None or elapsed <= limit)
    budget = f"{elapsed:.1f}s" if limit is None else f"{elapsed:.1f}s of {limit:.0f}s"
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {text} | {budget}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def disk_solves():
    t0 = time.perf_counter()
    reps = [solve(MA2, DISK, h, tol=1e-10) for h in DISK_HS]
    return reps, time.perf_counter() - t0


def test_criterion_1_radial_monge_ampere(disk_solves):
    reps, elapsed = disk_solves
    errors = []
    for rep in reps:
        x = rep.field.grid.points
        errors.append(float(np.abs(rep.field.u - 0.5 * (np.sum(x * x, axis=1) - 1.0)).max()))
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    ok = min(orders) >= 1.5 and errors[-1] <= 5e-4
    text = "errors " + ", ".join(f"{e:.2e}" for e in errors) + "; orders " + ", ".join(f"{o:.2f}" for o in orders)
    record(1, ok, text, elapsed, 60)


def test_criterion_2_radial_k_hessian():
    t0 = time.perf_counter()
    op = OperatorSpec.k_hessian(2, 3)
    rep = solve(op, DomainSpec.unit_ball(3), 1 / 16)
    i0 = rep.field.grid.locate((17, 17, 17))
    center = float(rep.field.u[i0])
    dev = abs(center + 1 / (2 * math.sqrt(3)))
    record(2, dev <= 5e-3, f"u(0) = {center:.6f}, |u(0) + 1/(2 sqrt 3)| = {dev:.2e}", time.perf_counter() - t0, 120)


def test_criterion_3_identity_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    bad = {}
    cases = 0
    for n in range(2, 7):
        split = splitting_suite(n, 10000, rng)
        newt = newton_suite(n, 100000 // (n - 1), rng)
        cases += split["cases"] + newt["cases"]
        if split["violations"]:
            bad[f"splitting n={n}"] = split["violations"]
        if newt["violations"]:
            bad[f"newton n={n}"] = newt["violations"]
        for op in operator_family(n):
            rep = operator_audit(op, 10000, seed=n, minor_samples=10000)
            if rep["total_violations"]:
                bad[op.label] = rep["total_violations"]
    text = f"n=2..6, all operator kinds; violations {bad or 0}"
    record(3, not bad, text, time.perf_counter() - t0, 120)


def test_criterion_4_condition_bridges():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    counts = {
        "CNS => D": cns_implies_d_suite(OperatorSpec.k_hessian(2, 3), 10000, rng),
        "k-Hessian lower bound": k_hessian_bridge_suite(2, 4, 10000, rng),
        "(p-1)-sums => CNS": pma_bridge_suite(3, 5, 10000, rng),
    }
    bad = {k: v["counterexamples"] + v.get("gamma_k_minus_1_failures", 0) for k, v in counts.items()}
    sizes = {k: v["instances"] for k, v in counts.items()}
    ok = not any(bad.values()) and all(s >= 10000 for s in sizes.values())
    record(4, ok, f"instances {sizes}; counterexamples {bad}", time.perf_counter() - t0, 60)


def test_criterion_5_condition_n():
    t0 = time.perf_counter()
    op = OperatorSpec.monge_ampere(3)
    est = estimate_garding_d(op, 100000, 5)
    n1, n2 = condition_n_constants(op, est.d_hat)
    lam = sample_admissible(op, 10000, np.random.default_rng(5))
    margin = condition_n_margin(op, lam, n1, n2)
    ok = 0.95 <= est.d_hat <= 1.05 and bool(np.all(margin >= 0))
    text = f"d_hat = {est.d_hat:.5f}, N1 = {n1:.3f}, N2 = {n2:g}, lower-bound violations {int(np.sum(margin < 0))}"
    record(5, ok, text, time.perf_counter() - t0, 120)


def test_criterion_6_functional(disk_solves):
    reps, solve_time = disk_solves
    t0 = time.perf_counter()
    rows = refinement_study(MA2, DISK, DISK_HS, solves=reps)
    finite = all(math.isfinite(r.report.functional_sup) for r in rows)
    ratio = rows[-1].report.stabilization_ratio
    c0 = all(c0_check(rep.field, MA2, DISK)[0] for rep in reps)
    gaps = [subsolution_gap(rep.field, MA2, DISK) for rep in reps]
    ok = finite and ratio <= 0.1 and c0 and min(gaps) >= 0
    sups = ", ".join(f"{r.report.functional_sup:.6f}" for r in rows)
    text = f"functional {sups}; last ratio {ratio:.2e}; C0 {c0}; min u - subsolution {min(gaps):.3f}"
    record(6, ok, text, time.perf_counter() - t0 + solve_time, None)


def test_criterion_7_blowdown():
    t0 = time.perf_counter()
    Rs = [1, 2, 4, 8]
    invariance = max(max(r.invariance_defect for r in blowdown(quadratic_source(a * np.eye(2)), Rs).rows) for a in (0.5, 1.0, 2.0))
    m = np.array([[1.2, 0.4], [0.4, 0.6]])
    src = quadratic_source(m)
    rep = blowdown(src, Rs)
    diam_ok = rep.ok
    pts = np.random.default_rng(7).uniform(-1, 1, (64, 2))
    equiv = max(hessian_equivariance_defect(src, R, pts) for R in Rs)
    ok = invariance <= 1e-12 and diam_ok and equiv <= 1e-10
    worst = max(r.diameter for r in rep.rows)
    text = f"invariance defect {invariance:.1e}; diam {worst:.3f} <= {rep.rows[0].diameter_bound:.3f}; equivariance {equiv:.1e}"
    record(7, ok, text, time.perf_counter() - t0, 30)


def test_criterion_8_liouville_probe():
    t0 = time.perf_counter()
    exact = liouville_probe(quadratic_source(np.array([[2.0, 0.5], [0.5, 1.0]]))).deviation
    square = solve(MA2, DomainSpec.unit_box(2), 1 / 32)
    dev = liouville_probe(square.field).deviation
    ok = exact <= 1e-10 and dev > 1e-2 and square.residual_max <= 1e-10
    record(8, ok, f"exact quadratic {exact:.1e}; unit square solution {dev:.3f}", time.perf_counter() - t0, 60)
