"""Damped Newton solver for F(D^2 u) = 1 in a domain, u = 0 on its boundary.

The iteration starts from the quadratic subsolution
``(A/2)(|x - x0|^2 - diam^2)`` with ``A = 1/f(1)``, which solves the
equation exactly but carries nonzero boundary values. Each Newton step moves
the boundary values toward zero together with the interior update, so every
accepted iterate is admissible and the step can be damped as a whole.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from hesslab.cones import cone_margin
from hesslab.grid import DomainSpec, Grid, GridField
from hesslab.operators import NotAdmissible, OperatorSpec, eigen_sym_batch, f_and_grad_unchecked, f_one

log = logging.getLogger(__name__)

ADMISSIBILITY_MARGIN = 1e-10
MIN_STEP = 1e-12
LINEAR_REDUCTION = 1e-8


class SolverError(RuntimeError):
    pass


class MaxIterExceeded(SolverError):
    pass


class LineSearchStagnation(SolverError):
    pass


class LinearSolveFailure(SolverError):
    pass


class NodeNotAdmissible(NotAdmissible):
    def __init__(self, index: int, point: np.ndarray, margin: float):
        self.index = index
        self.point = point
        self.margin = margin
        super().__init__(f"discrete Hessian at node {index} x={np.round(point, 12).tolist()} is outside the cone (margin {margin:.3e})")


def subsolution_coefficient(op: OperatorSpec) -> float:
    return 1.0 / f_one(op)


def subsolution(op: OperatorSpec, domain: DomainSpec):
    """The quadratic (A/2)(|x - x0|^2 - diam^2) centered at the domain midpoint."""
    a = subsolution_coefficient(op)
    x0 = domain.midpoint
    diam2 = domain.diameter**2

    def fn(x):
        x = np.atleast_2d(x)
        return 0.5 * a * (np.sum((x - x0) ** 2, axis=1) - diam2)

    return fn


def c0_depth(op: OperatorSpec, domain: DomainSpec) -> float:
    """diam^2 / (2 f(1)), the depth of the subsolution at the domain midpoint."""
    return domain.diameter**2 / (2.0 * f_one(op))


def initial_guess(op: OperatorSpec, domain: DomainSpec, h: float, grid: Grid | None = None) -> GridField:
    """Subsolution sampled at interior nodes and at the boundary cut points."""
    grid = grid if grid is not None else Grid(domain, h)
    fn = subsolution(op, domain)
    return GridField(grid, fn(grid.points), fn(grid.boundary_points), {"A": subsolution_coefficient(op)})


@dataclass
class _State:
    spectra: np.ndarray
    frames: np.ndarray
    margin: np.ndarray


def _spectral_state(op: OperatorSpec, field: GridField) -> _State:
    lam, q = eigen_sym_batch(field.hessians())
    return _State(lam, q, np.asarray(cone_margin(op.cone, lam)))


def _raise_first_bad(field: GridField, margin: np.ndarray, threshold: float) -> None:
    bad = np.flatnonzero(~(margin > threshold))
    if bad.size:
        i = int(bad[0])
        raise NodeNotAdmissible(i, field.grid.points[i], float(margin[i]))


def residual(op: OperatorSpec, field: GridField) -> np.ndarray:
    """F(discrete Hessian) - 1 at every interior node."""
    st = _spectral_state(op, field)
    _raise_first_bad(field, st.margin, 0.0)
    f, _ = f_and_grad_unchecked(op, st.spectra)
    return f - 1.0


def linearization(op: OperatorSpec, field: GridField) -> tuple[np.ndarray, sp.csr_matrix, sp.csr_matrix]:
    """Residual and its Jacobians with respect to interior and boundary values."""
    st = _spectral_state(op, field)
    _raise_first_bad(field, st.margin, 0.0)
    f, g = f_and_grad_unchecked(op, st.spectra)
    lin = np.einsum("mik,mk,mjk->mij", st.frames, g, st.frames)
    ju = None
    jb = None
    for (a, c), (d, e) in field.grid.hessian_ops.items():
        w = lin[:, a, c] * (1.0 if a == c else 2.0)
        dw = sp.diags(w) @ d
        ew = sp.diags(w) @ e
        ju = dw if ju is None else ju + dw
        jb = ew if jb is None else jb + ew
    return f - 1.0, ju.tocsc(), jb.tocsr()


@dataclass
class SolveReport:
    field: GridField
    residual_max: float
    newton_iterations: int
    line_search_backtracks: int
    admissible: bool
    h: float
    min_margin: float
    history: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        u = self.field.u
        return {
            "h": self.h,
            "residual_max": self.residual_max,
            "newton_iterations": self.newton_iterations,
            "line_search_backtracks": self.line_search_backtracks,
            "admissible": self.admissible,
            "min_cone_margin": self.min_margin,
            "interior_nodes": int(u.size),
            "u_min": float(u.min()),
            "u_max": float(u.max()),
            "history": self.history,
        }


def _linear_solve(ju: sp.csc_matrix, rhs: np.ndarray, dim: int) -> np.ndarray:
    """Direct sparse LU in 2D; ILU-preconditioned GMRES in 3D with LU fallback."""
    scale = max(np.linalg.norm(rhs), 1e-300)
    if dim == 3:
        try:
            ilu = spla.spilu(ju, drop_tol=1e-4, fill_factor=10)
            pre = spla.LinearOperator(ju.shape, ilu.solve)
            du, info = spla.gmres(ju, rhs, M=pre, rtol=1e-2 * LINEAR_REDUCTION, restart=50, maxiter=200)
            if info == 0 and np.linalg.norm(ju @ du - rhs) <= LINEAR_REDUCTION * scale:
                return du
        except RuntimeError:
            log.debug("ILU factorization failed; falling back to direct solve")
    try:
        du = spla.spsolve(ju, rhs)
    except RuntimeError as exc:  # singular factor
        raise LinearSolveFailure(str(exc)) from exc
    lin_res = np.linalg.norm(ju @ du - rhs)
    if not np.all(np.isfinite(du)) or lin_res > LINEAR_REDUCTION * scale:
        raise LinearSolveFailure(f"linear residual {lin_res:.3e} not reduced by {LINEAR_REDUCTION:g}")
    return du


def _merit(r: np.ndarray, bdefect: np.ndarray) -> float:
    bmax = float(np.max(np.abs(bdefect))) if bdefect.size else 0.0
    return max(float(np.max(np.abs(r))), bmax)


def solve(
    op: OperatorSpec,
    domain: DomainSpec,
    h: float,
    tol: float = 1e-10,
    max_iter: int = 60,
    boundary_value: float = 0.0,
    start: GridField | None = None,
) -> SolveReport:
    """Solve F(D^2 u) = 1, u = ``boundary_value`` on the boundary, by damped Newton.

    Steps are halved until every node keeps a cone margin of at least 1e-10
    and the max-norm merit (interior residual, boundary defect) decreases.
    """
    if op.n != domain.dim:
        raise ValueError(f"operator dimension {op.n} does not match domain dimension {domain.dim}")
    fld = start.copy() if start is not None else initial_guess(op, domain, h)
    grid = fld.grid
    target = np.full(grid.n_boundary, float(boundary_value))

    r, ju, jb = linearization(op, fld)
    phi = _merit(r, fld.boundary - target)
    backtracks = 0
    history = [{"iteration": 0, "merit": phi, "residual_max": float(np.max(np.abs(r))), "step": 0.0}]
    it = 0
    while True:
        if float(np.max(np.abs(r))) <= tol and np.array_equal(fld.boundary, target):
            break
        if it >= max_iter:
            raise MaxIterExceeded(f"no convergence after {max_iter} Newton iterations (merit {phi:.3e})")
        it += 1
        db = target - fld.boundary
        rhs = -r - jb @ db
        du = _linear_solve(ju, rhs, domain.dim)

        step = 1.0
        while True:
            trial = GridField(grid, fld.u + step * du, target.copy() if step == 1.0 else fld.boundary + step * db)
            st = _spectral_state(op, trial)
            if np.all(st.margin >= ADMISSIBILITY_MARGIN):
                f, _ = f_and_grad_unchecked(op, st.spectra)
                phi_t = _merit(f - 1.0, trial.boundary - target)
                if phi_t <= (1.0 - 1e-4 * step) * phi:
                    break
            step *= 0.5
            backtracks += 1
            if step < MIN_STEP:
                raise LineSearchStagnation(f"line search stagnated at iteration {it} (merit {phi:.3e})")
        fld = trial
        r, ju, jb = linearization(op, fld)
        phi = _merit(r, fld.boundary - target)
        history.append({"iteration": it, "merit": phi, "residual_max": float(np.max(np.abs(r))), "step": step})
        log.debug("newton %d: step %.3g merit %.3e", it, step, phi)

    margin = np.asarray(cone_margin(op.cone, eigen_sym_batch(fld.hessians())[0]))
    fld.meta.update({"operator": op.to_dict(), "domain": domain.to_dict(), "h": float(h)})
    return SolveReport(
        field=fld,
        residual_max=float(np.max(np.abs(r))),
        newton_iterations=it,
        line_search_backtracks=backtracks,
        admissible=bool(np.all(margin >= ADMISSIBILITY_MARGIN)),
        h=float(h),
        min_margin=float(margin.min()),
        history=history,
    )
