"""Pointwise and field-level checkers for the structural conditions on solutions.

* condition D: large eigenvalues have bounded weight, f_i lam_i <= D2 when lam_i > D1
* condition CNS: replacing any single eigenvalue by R stays inside the cone
* the k-Hessian hypothesis sigma_{k+1} >= -A sigma_k
* the p-Monge-Ampere hypothesis: every (p-1)-sum >= -A
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hesslab.cones import ConeSpec, cone_margin, contains, min_p_sum
from hesslab.operators import NotAdmissible, OperatorSpec, eigen_sym_batch, f_and_grad_unchecked, f_eval
from hesslab.symfun import as_spectrum, sigma_all, sorted_desc

NORMALIZATION_TOL = 1e-8
R_INFLATION = 1e-6


class NotNormalized(ValueError):
    pass


@dataclass
class ConditionReport:
    """Outcome of one condition check.

    ``worst_margin`` is the smallest slack over everything checked; it is
    negative exactly when the (non-strict) condition fails.
    """

    condition: str
    satisfied: bool
    worst_margin: float
    worst_point: object = None
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        wp = self.worst_point
        if isinstance(wp, np.ndarray):
            wp = wp.tolist()
        margin = self.worst_margin if math.isfinite(self.worst_margin) else None
        return {
            "condition": self.condition,
            "satisfied": self.satisfied,
            "worst_margin": margin,
            "worst_point": wp,
            "params": self.params,
            **({"extra": self.extra} if self.extra else {}),
        }


def _cone_check(cone: ConeSpec, lam: np.ndarray) -> None:
    if not contains(cone, lam):
        raise NotAdmissible(f"{lam.tolist()} is outside {cone.label}")


def check_condition_d(op: OperatorSpec, lam, D1: float, D2: float, normalize: bool = False) -> ConditionReport:
    """Whenever lam_i > D1 require f_i(lam) lam_i <= D2, at a spectrum with f = 1.

    With ``normalize=True`` the spectrum is first divided by f(lam).
    """
    arr = as_spectrum(lam, allow_batch=False)
    f = f_eval(op, arr)
    if normalize:
        arr = arr / f
    elif abs(f - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"f(lambda) = {f!r}, expected 1 within {NORMALIZATION_TOL:g}")
    _, g = f_and_grad_unchecked(op, arr[None])
    weights = g[0] * arr
    big = arr > D1
    if big.any():
        slack = D2 - weights[big]
        j = int(np.argmin(slack))
        worst, where = float(slack[j]), int(np.flatnonzero(big)[j])
    else:
        worst, where = math.inf, None
    return ConditionReport("D", worst >= 0, worst, where, {"D1": D1, "D2": D2})


def check_cns(cone: ConeSpec, lam, R: float) -> ConditionReport:
    """Replace each entry in turn by R; all n vectors must lie in the cone."""
    arr = as_spectrum(lam, allow_batch=False)
    _cone_check(cone, arr)
    reps = np.repeat(arr[None], arr.size, axis=0)
    np.fill_diagonal(reps, R)
    margins = np.asarray(cone_margin(cone, reps))
    j = int(np.argmin(margins))
    return ConditionReport("CNS", bool(margins[j] > 0), float(margins[j]), j, {"R": R, "cone": cone.label})


def check_k_hessian_lower_bound(lam, k: int, A: float) -> ConditionReport:
    """sigma_{k+1}(lam) >= -A sigma_k(lam), plus the conclusion that (lam', R) is in Gamma_k.

    ``lam'`` drops the largest entry, which is replaced by R = A (1 + 1e-6) + 1e-6.
    The intermediate membership of (lam', R) in Gamma_{k-1} is recorded too.
    """
    arr = sorted_desc(as_spectrum(lam, allow_batch=False))
    n = arr.size
    cone = ConeSpec.gamma_k(k, n)
    _cone_check(cone, arr)
    s = sigma_all(arr)
    sk1 = s[k + 1] if k + 1 <= n else 0.0
    margin = float(sk1 + A * s[k])
    R = A * (1.0 + R_INFLATION) + R_INFLATION
    replaced = arr.copy()
    replaced[0] = R
    conclusion = bool(contains(cone, replaced))
    step = bool(contains(ConeSpec.gamma_k(k - 1, n), replaced)) if k > 1 else True
    return ConditionReport(
        "k-Hessian lower bound",
        margin >= 0,
        margin,
        None,
        {"k": k, "A": A, "R": R},
        {"conclusion_holds": conclusion, "gamma_k_minus_1_holds": step, "sigma_k": float(s[k]), "sigma_k_plus_1": float(sk1)},
    )


def check_pma_partial_sums(lam, p: int, A: float) -> ConditionReport:
    """Every (p-1)-sum of lam is at least -A.

    Also records whether lam + R (R = A + eps) has positive (p-1)-sums and
    whether CNS holds with that R on Gamma-hat_p.
    """
    arr = as_spectrum(lam, allow_batch=False)
    n = arr.size
    cone = ConeSpec.gamma_hat_p(p, n)
    _cone_check(cone, arr)
    low = min_p_sum(arr, p - 1) if p > 1 else 0.0
    margin = float(low + A)
    R = A + R_INFLATION * max(1.0, abs(A))
    shifted = min_p_sum(arr + R, p - 1) > 0 if p > 1 else True
    cns = check_cns(cone, arr, R)
    return ConditionReport(
        "p-MA partial sums",
        margin >= 0,
        margin,
        None,
        {"p": p, "A": A, "R": R},
        {"shift_admissible": bool(shifted), "cns_holds": cns.satisfied},
    )


CONDITIONS = ("d", "cns", "khess", "pma")


class FieldConditionError(ValueError):
    def __init__(self, index: int, point, cause: Exception):
        self.index = index
        self.point = np.asarray(point)
        super().__init__(f"node {index} at x={np.round(self.point, 12).tolist()}: {cause}")


def field_condition_scan(op: OperatorSpec, field, which: str, params: dict, exclude=None) -> ConditionReport:
    """Apply a pointwise checker at every interior node of a solved field.

    ``params`` carries D1/D2 (``d``), R (``cns``) or A (``khess``, ``pma``).
    ``exclude`` is an optional boolean mask of interior nodes to skip.
    """
    if which not in CONDITIONS:
        raise ValueError(f"unknown condition {which!r}; expected one of {CONDITIONS}")
    lam, _ = eigen_sym_batch(field.hessians())
    pts = field.grid.points
    keep = np.ones(len(lam), dtype=bool) if exclude is None else ~np.asarray(exclude)
    worst = math.inf
    worst_at = None
    ok = True
    conclusion_ok = True
    for i in np.flatnonzero(keep):
        try:
            if which == "d":
                rep = check_condition_d(op, lam[i], params["D1"], params["D2"], normalize=True)
            elif which == "cns":
                rep = check_cns(op.cone, lam[i], params["R"])
            elif which == "khess":
                rep = check_k_hessian_lower_bound(lam[i], op.k, params["A"])
                conclusion_ok &= rep.extra["conclusion_holds"]
            else:
                rep = check_pma_partial_sums(lam[i], op.p, params["A"])
        except (NotAdmissible, NotNormalized, ValueError) as exc:
            raise FieldConditionError(int(i), pts[i], exc) from exc
        ok &= rep.satisfied
        if rep.worst_margin < worst:
            worst = rep.worst_margin
            worst_at = {"index": int(i), "x": pts[i].tolist()}
    extra = {"nodes_checked": int(keep.sum())}
    if which == "khess":
        extra["conclusion_holds"] = bool(conclusion_ok)
    return ConditionReport(which.upper() if which in ("d", "cns") else which, bool(ok), worst, worst_at, dict(params), extra)
