"""Measurements on solved fields and entire-function surrogates.

* the weighted interior functional (-u) + (-u)^alpha |Du| + (-u)^beta |D^2 u|
* the C0 bound -C <= u < 0 with C = diam^2 / (2 f(1))
* mesh-refinement tables of the functional
* blow-down rescalings v_R(y) = (u(Ry) - R^2) / R^2 and their sublevel sets
* a rigidity probe fitting one quadratic to the whole field
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from hesslab.grid import DomainSpec, GridField
from hesslab.operators import OperatorSpec, condition_n_constants, eigen_sym_batch
from hesslab.solver import c0_depth, solve, subsolution

C0_SLACK = 1e-8
CORNER_CLIP = 4.0


def default_exponents(n: int) -> tuple[float, float]:
    """alpha = (N2 + 2)/2 and beta = N2 + (4 alpha + 2) + 1 with N2 = n - 1."""
    # N2 does not depend on the Garding constant, so any positive d works here
    _, n2 = condition_n_constants(OperatorSpec.monge_ampere(n), 1.0)
    alpha = (n2 + 2.0) / 2.0
    beta = n2 + (4.0 * alpha + 2.0) + 1.0
    return alpha, beta


@dataclass
class EstimateReport:
    alpha: float
    beta: float
    functional_sup: float
    c0_bound: float | None
    sup_u: float
    sup_gradient_term: float
    sup_hessian_term: float
    h: float
    nodes: int
    argmax: list[float]
    stabilization_ratio: float | None = None

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "alpha": self.alpha,
            "beta": self.beta,
            "functional_sup": self.functional_sup,
            "sup_neg_u": self.sup_u,
            "sup_gradient_term": self.sup_gradient_term,
            "sup_hessian_term": self.sup_hessian_term,
            "c0_bound": self.c0_bound,
            "nodes": self.nodes,
            "argmax": self.argmax,
            "stabilization_ratio": self.stabilization_ratio,
        }


def functional_terms(field: GridField, alpha: float, beta: float, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-node terms (-u, (-u)^alpha |Du|, (-u)^beta |D^2u|), shape (N, 3), and the node points."""
    u = field.u
    keep = np.ones(u.size, dtype=bool) if mask is None else np.asarray(mask)
    if np.any(u[keep] >= 0):
        i = int(np.flatnonzero(keep & (u >= 0))[0])
        raise ValueError(f"u is nonnegative at interior node {i} (u = {u[i]:.3e})")
    w = -u[keep]
    grad = np.linalg.norm(field.gradients()[keep], axis=1)
    lam, _ = eigen_sym_batch(field.hessians()[keep])
    hess = np.max(np.abs(lam), axis=1)
    return np.column_stack([w, w**alpha * grad, w**beta * hess]), field.grid.points[keep]


def estimate_functional(
    field: GridField,
    alpha: float | None = None,
    beta: float | None = None,
    mask=None,
    c0_bound: float | None = None,
) -> EstimateReport:
    """Sup over interior nodes of the weighted functional and of each term.

    |Du| is Euclidean, |D^2 u| the largest eigenvalue magnitude.
    """
    da, db = default_exponents(field.grid.dim)
    alpha = da if alpha is None else alpha
    beta = db if beta is None else beta
    terms, pts = functional_terms(field, alpha, beta, mask)
    total = terms.sum(axis=1)
    j = int(np.argmax(total))
    sups = terms.max(axis=0)
    return EstimateReport(
        alpha=alpha,
        beta=beta,
        functional_sup=float(total[j]),
        c0_bound=c0_bound,
        sup_u=float(sups[0]),
        sup_gradient_term=float(sups[1]),
        sup_hessian_term=float(sups[2]),
        h=field.h,
        nodes=int(terms.shape[0]),
        argmax=pts[j].tolist(),
    )


def c0_check(field: GridField, op: OperatorSpec, domain: DomainSpec) -> tuple[bool, float]:
    """-C - 1e-8 <= u < 0 at every interior node, C = diam^2 / (2 f(1))."""
    C = c0_depth(op, domain)
    u = field.u
    return bool(np.all(u < 0) and np.all(u >= -C - C0_SLACK)), C


def subsolution_gap(field: GridField, op: OperatorSpec, domain: DomainSpec) -> float:
    """min over interior nodes of u - (subsolution); nonnegative up to rounding when ordered."""
    return float(np.min(field.u - subsolution(op, domain)(field.grid.points)))


def corner_mask(field: GridField, clip: float = CORNER_CLIP) -> np.ndarray | None:
    if field.grid.domain.shape != "box":
        return None
    return field.grid.corner_distance() >= clip * field.h


@dataclass
class RefinementRow:
    report: EstimateReport
    solve_summary: dict
    c0_holds: bool
    subsolution_gap: float
    error: str | None = None


def refinement_study(
    op: OperatorSpec,
    domain: DomainSpec,
    h_list,
    alpha: float | None = None,
    beta: float | None = None,
    tol: float = 1e-10,
    solves: list | None = None,
) -> list[RefinementRow]:
    """One solve and one functional evaluation per h, with successive ratios.

    Box domains exclude nodes within 4h of a corner. Pre-computed solve
    reports may be passed in ``solves`` (same order as ``h_list``).
    """
    hs = list(h_list)
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h_list must be strictly decreasing")
    rows: list[RefinementRow] = []
    for idx, h in enumerate(hs):
        rep = solves[idx] if solves is not None else solve(op, domain, h, tol=tol)
        fld = rep.field
        est = estimate_functional(fld, alpha, beta, corner_mask(fld), c0_bound=c0_depth(op, domain))
        holds, _ = c0_check(fld, op, domain)
        rows.append(RefinementRow(est, rep.summary(), holds, subsolution_gap(fld, op, domain)))
    for prev, cur in zip(rows, rows[1:]):
        a, b = prev.report.functional_sup, cur.report.functional_sup
        cur.report.stabilization_ratio = abs(b - a) / a
    return rows


# --- blow-down -------------------------------------------------------------


class GrowthViolation(ValueError):
    pass


@dataclass
class AnalyticSource:
    """An entire function given by vectorized value and Hessian callables."""

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    growth_C: float
    label: str = "analytic"


def quadratic_source(M, growth_C: float | None = None, label: str | None = None) -> AnalyticSource:
    """u(x) = x^T M x / 2 with M positive definite; default C = max(1, 2/lambda_min(M))."""
    M = np.asarray(M, dtype=float)
    lmin = float(np.linalg.eigvalsh(M).min())
    if lmin <= 0:
        raise ValueError("quadratic needs a positive definite matrix")
    C = max(1.0, 2.0 / lmin) if growth_C is None else growth_C
    dim = M.shape[0]
    return AnalyticSource(
        dim,
        lambda x: 0.5 * np.einsum("mi,ij,mj->m", x, M, x),
        lambda x: np.broadcast_to(M, (np.atleast_2d(x).shape[0], dim, dim)),
        C,
        label or "quadratic",
    )


def bump_perturbed_source(M, eps: float, radius: float, growth_C: float | None = None) -> AnalyticSource:
    """x^T M x / 2 + eps (1 - |x|^2/r^2)^4 on |x| < r, a C^3 compactly supported perturbation."""
    base = quadratic_source(M)
    dim = base.dim
    r2 = radius * radius

    def value(x):
        s = np.clip(1.0 - np.sum(x * x, axis=1) / r2, 0.0, None)
        return base.value(x) + eps * s**4

    def hessian(x):
        x = np.atleast_2d(x)
        s = np.clip(1.0 - np.sum(x * x, axis=1) / r2, 0.0, None)
        outer = np.einsum("mi,mj->mij", x, x)
        bump = 48.0 * (s**2)[:, None, None] * outer / r2**2 - 8.0 * (s**3)[:, None, None] * np.eye(dim) / r2
        return base.hessian(x) + eps * bump

    C = base.growth_C + 2.0 * abs(eps) if growth_C is None else growth_C
    return AnalyticSource(dim, value, hessian, C, "quadratic+bump")


@dataclass
class BlowdownRow:
    R: float
    diameter: float
    diameter_bound: float
    within_bound: bool
    omega_nodes: int
    omega_prime_nodes: int
    sup_hessian_omega_prime: float
    invariance_defect: float
    subset_ok: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BlowdownReport:
    source: str
    growth_C: float
    grid_h: float
    rows: list[BlowdownRow] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.within_bound and r.subset_ok for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "growth_C": self.growth_C,
            "grid_h": self.grid_h,
            "diameter_bound": 2.0 * math.sqrt(self.growth_C * (self.growth_C + 1.0)),
            "all_within_bound": self.ok,
            "rows": [r.to_dict() for r in self.rows],
        }


def point_set_diameter(pts: np.ndarray) -> float:
    """Largest pairwise distance, reduced to convex-hull vertices when possible."""
    if pts.shape[0] < 2:
        return 0.0
    cand = pts
    if pts.shape[0] > pts.shape[1] + 1:
        try:
            cand = pts[ConvexHull(pts).vertices]
        except QhullError:
            cand = pts
    best = 0.0
    for i in range(0, cand.shape[0], 512):
        d = np.linalg.norm(cand[i : i + 512, None, :] - cand[None, :, :], axis=2)
        best = max(best, float(d.max()))
    return best


def _cartesian(dim: int, half: float, h: float) -> tuple[np.ndarray, tuple[int, ...]]:
    m = int(math.ceil(half / h))
    ax = h * np.arange(-m, m + 1)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1), (2 * m + 1,) * dim


def fd_hessian_on_lattice(values: np.ndarray, shape: tuple[int, ...], h: float) -> np.ndarray:
    """Central-difference Hessians on a full lattice; edge layers are NaN."""
    dim = len(shape)
    v = values.reshape(shape)
    out = np.full(shape + (dim, dim), np.nan)
    core = tuple(slice(1, -1) for _ in range(dim))

    def shifted(offs):
        return v[tuple(slice(1 + o, s - 1 + o) for o, s in zip(offs, shape))]

    for a in range(dim):
        e = [0] * dim
        e[a] = 1
        out[core + (a, a)] = (shifted(e) - 2.0 * v[core] + shifted([-x for x in e])) / (h * h)
        for b in range(a + 1, dim):
            pp = [0] * dim
            pp[a] = pp[b] = 1
            pm = [0] * dim
            pm[a], pm[b] = 1, -1
            val = (shifted(pp) + shifted([-x for x in pp]) - shifted(pm) - shifted([-x for x in pm])) / (4.0 * h * h)
            out[core + (a, b)] = val
            out[core + (b, a)] = val
    return out.reshape((-1, dim, dim))


def blowdown(source: AnalyticSource, R_list, grid_h: float | None = None, growth_tol: float = 1e-12) -> BlowdownReport:
    """Sample v_R on a lattice over |y|^2 <= C(C+1) and measure Omega_R, Omega'_R.

    u is shifted so that u(0) = 0. Raises GrowthViolation if some sampled
    u(Ry) falls below |Ry|^2/C - C.
    """
    C = source.growth_C
    rho = math.sqrt(C * (C + 1.0))
    dim = source.dim
    h = grid_h if grid_h is not None else rho / (40.0 if dim == 2 else 12.0)
    ys, shape = _cartesian(dim, rho + 2.0 * h, h)
    inside_ball = np.sum(ys * ys, axis=1) <= rho * rho
    u0 = float(source.value(np.zeros((1, dim)))[0])
    if not math.isfinite(u0):
        raise ValueError("u(0) is not finite")
    report = BlowdownReport(source.label, C, h)
    first = None
    for R in R_list:
        x = R * ys
        ux = source.value(x) - u0
        lower = np.sum(x * x, axis=1) / C - C
        slack = ux - lower
        if np.any(slack < -growth_tol * np.maximum(1.0, np.abs(lower))):
            raise GrowthViolation(f"u(x) < |x|^2/C - C at R={R}, min slack {slack.min():.3e}")
        v = (ux - R * R) / (R * R)
        omega = v < 0
        prime = v <= -0.5
        if np.any(omega & ~inside_ball):
            raise GrowthViolation(f"Omega_R leaves the ball |y|^2 <= C(C+1) at R={R}")
        hess = fd_hessian_on_lattice(v, shape, h)
        if prime.any():
            lam, _ = eigen_sym_batch(hess[prime])
            sup_h = float(np.max(np.abs(lam)))
        else:
            sup_h = 0.0
        first = v if first is None else first
        diam = point_set_diameter(ys[omega])
        report.rows.append(
            BlowdownRow(
                R=float(R),
                diameter=diam,
                diameter_bound=2.0 * rho,
                within_bound=diam <= 2.0 * rho,
                omega_nodes=int(omega.sum()),
                omega_prime_nodes=int(prime.sum()),
                sup_hessian_omega_prime=sup_h,
                invariance_defect=float(np.max(np.abs(v - first))),
                subset_ok=bool(np.all(omega[prime])),
            )
        )
    return report


def hessian_equivariance_defect(source: AnalyticSource, R: float, points: np.ndarray, h: float = 0.05) -> float:
    """max |D^2_y v_R(y) - D^2 u(R y)| with the left side from finite differences in y."""
    pts = np.atleast_2d(points)
    dim = source.dim
    u0 = float(source.value(np.zeros((1, dim)))[0])

    def v(y):
        return (source.value(R * y) - u0 - R * R) / (R * R)

    fd = np.empty((pts.shape[0], dim, dim))
    eye = np.eye(dim) * h
    for a in range(dim):
        fd[:, a, a] = (v(pts + eye[a]) - 2.0 * v(pts) + v(pts - eye[a])) / (h * h)
        for b in range(a + 1, dim):
            val = (
                v(pts + eye[a] + eye[b]) + v(pts - eye[a] - eye[b]) - v(pts + eye[a] - eye[b]) - v(pts - eye[a] + eye[b])
            ) / (4.0 * h * h)
            fd[:, a, b] = fd[:, b, a] = val
    return float(np.max(np.abs(fd - source.hessian(R * pts))))


def blowdown_field(field: GridField, R_list, growth_C: float) -> BlowdownReport:
    """Blow-down measured directly on a solved field's nodes.

    Uses D^2_y v_R(y) = D^2 u(R y): the Hessian on Omega'_R is the field's
    discrete Hessian at nodes x with u(x) - u(0) <= R^2/2. Sets reaching the
    grid boundary are reported but cannot be certified as compact.
    """
    g = field.grid
    x = g.points
    i0 = int(np.argmin(np.linalg.norm(x - g.domain.midpoint, axis=1)))
    u = field.u - field.u[i0]
    rho = math.sqrt(growth_C * (growth_C + 1.0))
    lam, _ = eigen_sym_batch(field.hessians())
    hnorm = np.max(np.abs(lam), axis=1)
    report = BlowdownReport("field", growth_C, g.h)
    for R in R_list:
        v = (u - R * R) / (R * R)
        omega = v < 0
        prime = v <= -0.5
        y = x / R
        diam = point_set_diameter(y[omega])
        report.rows.append(
            BlowdownRow(
                R=float(R),
                diameter=diam,
                diameter_bound=2.0 * rho,
                within_bound=diam <= 2.0 * rho,
                omega_nodes=int(omega.sum()),
                omega_prime_nodes=int(prime.sum()),
                sup_hessian_omega_prime=float(hnorm[prime].max()) if prime.any() else 0.0,
                invariance_defect=float("nan"),
                subset_ok=bool(np.all(omega[prime])),
            )
        )
    return report


# --- rigidity probe --------------------------------------------------------


@dataclass
class ProbeResult:
    hessian: np.ndarray
    gradient: np.ndarray
    constant: float
    deviation: float
    fit_residual: float

    def to_dict(self) -> dict:
        return {
            "fitted_hessian": self.hessian.tolist(),
            "fitted_gradient": self.gradient.tolist(),
            "fitted_constant": self.constant,
            "deviation": self.deviation,
            "fit_residual_max": self.fit_residual,
        }


def _quadratic_design(x: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    dim = x.shape[1]
    pairs = [(a, b) for a in range(dim) for b in range(a, dim)]
    cols = [np.ones(x.shape[0])] + [x[:, a] for a in range(dim)]
    cols += [0.5 * x[:, a] ** 2 if a == b else x[:, a] * x[:, b] for a, b in pairs]
    return np.column_stack(cols), pairs


def fit_quadratic(x: np.ndarray, values: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, float]:
    """Least-squares c + g.x + x^T H x / 2 through the samples."""
    design, pairs = _quadratic_design(x)
    if design.shape[0] < design.shape[1]:
        raise ValueError(f"quadratic fit needs at least {design.shape[1]} nodes, got {design.shape[0]}")
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    dim = x.shape[1]
    H = np.zeros((dim, dim))
    for c, (a, b) in zip(coef[1 + dim :], pairs):
        H[a, b] = H[b, a] = c
    res = float(np.max(np.abs(design @ coef - values)))
    return float(coef[0]), coef[1 : 1 + dim], H, res


def liouville_probe(source, ball_radius: float = 1.0, h: float = 0.05) -> ProbeResult:
    """Fit one quadratic; deviation = sup over nodes of ||D^2 u - H_fit|| (spectral).

    ``source`` is a GridField (discrete Hessians at interior nodes) or an
    AnalyticSource sampled on a lattice over the ball of ``ball_radius``.
    """
    if isinstance(source, GridField):
        x = source.grid.points
        vals = source.u
        hess = source.hessians()
    else:
        ys, _ = _cartesian(source.dim, ball_radius, h)
        x = ys[np.sum(ys * ys, axis=1) < ball_radius**2]
        vals = source.value(x)
        hess = np.asarray(source.hessian(x))
    c, g, H, res = fit_quadratic(x, vals)
    lam, _ = eigen_sym_batch(hess - H)
    return ProbeResult(H, g, c, float(np.max(np.abs(lam))), res)
