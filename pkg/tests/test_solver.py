import math

import numpy as np
import pytest

from hesslab.grid import DomainSpec, GridField
from hesslab.operators import OperatorSpec
from hesslab.solver import (
    NodeNotAdmissible,
    c0_depth,
    initial_guess,
    linearization,
    residual,
    solve,
    subsolution,
    subsolution_coefficient,
)

MA2 = OperatorSpec.monge_ampere(2)
KH23 = OperatorSpec.k_hessian(2, 3)
DISK = DomainSpec.unit_ball(2)


def test_subsolution_examples():
    assert subsolution_coefficient(MA2) == pytest.approx(1.0)
    assert subsolution(MA2, DISK)(np.zeros(2))[0] == pytest.approx(-2.0)
    assert subsolution_coefficient(KH23) == pytest.approx(1 / math.sqrt(3))
    assert c0_depth(MA2, DISK) == pytest.approx(2.0)


@pytest.mark.parametrize("op", [MA2, OperatorSpec.p_monge_ampere(1, 2), OperatorSpec.hessian_quotient(2, 1, 2)], ids=lambda o: o.label)
def test_initial_guess_is_discrete_solution(op):
    f = initial_guess(op, DISK, 1 / 16)
    assert np.abs(residual(op, f)).max() <= 1e-12
    assert np.all(f.u <= 0)


def test_residual_homogeneity():
    f = initial_guess(MA2, DISK, 1 / 16)
    doubled = GridField(f.grid, 2 * f.u, 2 * f.boundary)
    np.testing.assert_allclose(residual(MA2, doubled), 1.0, atol=1e-12)


def test_exact_quadratic_residual():
    g = initial_guess(MA2, DISK, 1 / 32).grid
    fn = lambda x: 0.5 * (np.sum(x * x, axis=1) - 1)
    f = GridField(g, fn(g.points), fn(g.boundary_points))
    assert np.abs(residual(MA2, f)).max() <= 1e-12


def test_non_admissible_field_reports_node():
    f = initial_guess(MA2, DISK, 1 / 16)
    bad = f.copy()
    bad.u[40] += 1.0
    with pytest.raises(NodeNotAdmissible) as info:
        residual(MA2, bad)
    assert info.value.point.shape == (2,)


def test_jacobian_matches_finite_differences(rng):
    f = initial_guess(MA2, DISK, 1 / 8)
    bump = lambda x: 0.05 * x[:, 0] ** 3 + 0.1 * x[:, 0] * x[:, 1]
    f = GridField(f.grid, f.u + bump(f.grid.points), f.boundary + bump(f.grid.boundary_points))
    r, ju, jb = linearization(MA2, f)
    v = rng.normal(size=f.u.size)
    w = rng.normal(size=f.boundary.size)
    eps = 1e-6
    plus = GridField(f.grid, f.u + eps * v, f.boundary + eps * w)
    minus = GridField(f.grid, f.u - eps * v, f.boundary - eps * w)
    fd = (residual(MA2, plus) - residual(MA2, minus)) / (2 * eps)
    np.testing.assert_allclose(ju @ v + jb @ w, fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())


def test_disk_monge_ampere_matches_closed_form():
    rep = solve(MA2, DISK, 1 / 32, tol=1e-10)
    x = rep.field.grid.points
    err = np.abs(rep.field.u - 0.5 * (np.sum(x * x, axis=1) - 1)).max()
    assert rep.residual_max <= 1e-10 and rep.admissible
    assert err <= 1e-10
    assert np.all(rep.field.boundary == 0.0)


def test_k_hessian_ball_center():
    rep = solve(KH23, DomainSpec.unit_ball(3), 1 / 16)
    i0 = rep.field.grid.locate((17, 17, 17))
    assert rep.field.u[i0] == pytest.approx(-1 / (2 * math.sqrt(3)), abs=5e-3)


@pytest.mark.parametrize(
    "op, domain",
    [
        (OperatorSpec.hessian_quotient(2, 1, 2), DomainSpec.unit_box(2)),
        (OperatorSpec.p_monge_ampere(2, 3), DomainSpec.unit_ball(3)),
        (OperatorSpec.k_hessian(1, 2), DomainSpec.unit_box(2)),
    ],
    ids=["quotient-box", "pma-ball", "laplace-box"],
)
def test_other_operators_converge(op, domain):
    h = 1 / 16 if domain.dim == 2 else 1 / 8
    rep = solve(op, domain, h)
    assert rep.residual_max <= 1e-10 and rep.admissible
    assert np.all(rep.field.u < 0)


def test_unit_square_self_convergence_order():
    """Richardson self-convergence at the shared coarse nodes across h, h/2, h/4."""
    box = DomainSpec.unit_box(2)
    vals = []
    for m in (16, 32, 64):
        f = solve(MA2, box, 1 / m).field
        s = m // 16
        idx = [f.grid.locate((i * s, j * s)) for i in range(1, 16) for j in range(1, 16)]
        vals.append(f.u[idx])
    d1 = np.abs(vals[0] - vals[1]).max()
    d2 = np.abs(vals[1] - vals[2]).max()
    order = math.log2(d1 / d2)
    assert order >= 1.5, f"observed self-convergence order {order:.3f}"


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        solve(KH23, DISK, 1 / 16)


@pytest.mark.parametrize("domain", [DomainSpec.unit_box(2), DISK], ids=["square", "disk"])
def test_reflection_symmetry(domain):
    f = solve(OperatorSpec.p_monge_ampere(1, 2), domain, 1 / 16).field
    g = f.grid
    full = np.full(g.shape, np.nan)
    full.flat[g.interior_flat] = f.u
    for sym in (full[::-1, :], full[:, ::-1], full.T):
        mask = ~np.isnan(full)
        assert np.array_equal(mask, ~np.isnan(sym))
        assert np.abs(full[mask] - sym[mask]).max() <= 1e-8
