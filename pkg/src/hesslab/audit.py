"""Randomized invariant suites over cones, operators and condition checkers.

Each suite returns plain dicts of violation counts so that the command line
and the test-suite can share them.
"""

from __future__ import annotations

import numpy as np

from hesslab.cones import ConeSpec, axis_reach, axiom_audit, contains, min_p_sum, sample_cone
from hesslab.conditions import check_cns, check_condition_d, check_k_hessian_lower_bound
from hesslab.operators import (
    OperatorSpec,
    condition_n_constants,
    condition_n_margin,
    estimate_garding_d,
    f_and_grad_unchecked,
    sample_admissible,
)
from hesslab.symfun import newton_residual, sigma_all, sigma_partial_all

SPLIT_RTOL = 1e-10
NEWTON_RTOL = 1e-12
HOMOGENEITY_RTOL = 1e-10
GRADIENT_RTOL = 1e-6
GRADIENT_STEP = 1e-5
CONCAVITY_RTOL = 1e-10


def operator_family(n: int) -> list[OperatorSpec]:
    """Representatives of all four operator kinds in dimension n."""
    ops = [OperatorSpec.monge_ampere(n)]
    ops += [OperatorSpec.k_hessian(k, n) for k in range(1, n + 1)]
    pairs = {(2, 1), (n, n - 1), (n, 1)}
    ops += [OperatorSpec.hessian_quotient(k, l, n) for k, l in sorted(pairs)]
    ops += [OperatorSpec.p_monge_ampere(p, n) for p in range(1, n + 1)]
    return ops


def parse_operator(kind: str, n: int, k=None, l=None, p=None) -> OperatorSpec:
    aliases = {"ma": "ma", "khessian": "khessian", "quotient": "quotient", "pma": "pma"}
    if kind not in aliases:
        raise ValueError(f"unknown operator {kind!r}")
    return OperatorSpec(aliases[kind], n, k=k, l=l, p=p)


# --- symmetric-function identities ----------------------------------------


def splitting_suite(n: int, samples: int, rng: np.random.Generator) -> dict:
    lam = rng.uniform(-1e3, 1e3, (samples, n))
    full = sigma_all(lam)
    part = sigma_partial_all(lam)
    scale = np.maximum(1.0, np.abs(full).max(axis=1))
    worst = 0.0
    bad = 0
    for i in range(n):
        for j in range(1, n + 1):
            rest = part[:, i, j] if j <= n - 1 else 0.0
            d = np.abs(full[:, j] - part[:, i, j - 1] * lam[:, i] - rest) / scale
            worst = max(worst, float(d.max()))
            bad += int(np.sum(d > SPLIT_RTOL))
    return {"cases": samples * n * n, "violations": bad, "worst_relative_defect": worst}


def newton_suite(n: int, samples: int, rng: np.random.Generator) -> dict:
    mu = rng.uniform(-10.0, 10.0, (samples, n))
    scale = np.maximum(1.0, np.abs(sigma_all(mu)).max(axis=1))
    bad = 0
    worst = np.inf
    for j in range(1, n):
        rel = newton_residual(mu, j) / scale**2
        bad += int(np.sum(rel < -NEWTON_RTOL))
        worst = min(worst, float(rel.min()))
    return {"cases": samples * (n - 1), "violations": bad, "min_relative_residual": worst}


# --- operator invariants ---------------------------------------------------


def homogeneity_suite(op: OperatorSpec, samples: int, rng) -> dict:
    lam = sample_cone(op.cone, samples, rng).points
    f, g = f_and_grad_unchecked(op, lam)
    rel = np.abs(np.sum(g * lam, axis=1) - f) / np.abs(f)
    return {"cases": samples, "violations": int(np.sum(rel > HOMOGENEITY_RTOL)), "worst": float(rel.max())}


def gradient_suite(op: OperatorSpec, samples: int, rng) -> dict:
    """Analytic gradient vs central differences at normalized cone points.

    The step along e_i is 1e-5 times the local length scale in that
    direction: the smaller of max(1, |lam|_inf) and the distance to the cone
    boundary along -e_i. Near the boundary the third derivatives grow like
    the inverse cube of that distance, so a global step would measure
    truncation error rather than the gradient.
    """
    lam = sample_admissible(op, samples, rng)
    n = op.n
    _, g = f_and_grad_unchecked(op, lam)
    scale = np.minimum(np.maximum(1.0, np.abs(lam).max(axis=1))[:, None], axis_reach(op.cone, lam))
    step = GRADIENT_STEP * scale
    eye = np.eye(n)
    plus = (lam[:, None, :] + step[:, :, None] * eye).reshape(-1, n)
    minus = (lam[:, None, :] - step[:, :, None] * eye).reshape(-1, n)
    inside = (contains(op.cone, plus) & contains(op.cone, minus)).reshape(samples, n).all(axis=1)
    fp, _ = f_and_grad_unchecked(op, plus)
    fm, _ = f_and_grad_unchecked(op, minus)
    fd = (fp - fm).reshape(samples, n) / (2.0 * step)
    rel = np.abs(fd - g).max(axis=1) / np.abs(g).max(axis=1)
    rel = np.where(inside, rel, np.inf)
    return {
        "cases": samples,
        "violations": int(np.sum(~(rel <= GRADIENT_RTOL))),
        "worst": float(rel[np.isfinite(rel)].max()) if np.isfinite(rel).any() else None,
        "stencil_left_cone": int(np.sum(~inside)),
    }


def concavity_suite(op: OperatorSpec, samples: int, rng) -> dict:
    lam = sample_cone(op.cone, samples, rng).points
    mu = sample_cone(op.cone, samples, rng).points
    t = rng.random(samples)
    fl, _ = f_and_grad_unchecked(op, lam)
    fm, _ = f_and_grad_unchecked(op, mu)
    fx, _ = f_and_grad_unchecked(op, t[:, None] * lam + (1 - t)[:, None] * mu)
    scale = np.maximum(1.0, np.maximum(np.abs(fl), np.abs(fm)))
    gap = fx - (t * fl + (1 - t) * fm)
    return {"cases": samples, "violations": int(np.sum(gap < -CONCAVITY_RTOL * scale)), "min_gap": float((gap / scale).min())}


def ellipticity_suite(op: OperatorSpec, samples: int, rng) -> dict:
    lam = sample_cone(op.cone, samples, rng).points
    _, g = f_and_grad_unchecked(op, lam)
    return {"cases": samples, "violations": int(np.sum(~(g.min(axis=1) > 0)))}


def monotonicity_suite(op: OperatorSpec, samples: int, rng) -> dict:
    """F(A + P) > F(A) for admissible A and positive definite P."""
    from hesslab.operators import F_eval

    n = op.n
    lam = sample_cone(op.cone, samples, rng).points
    q, _ = np.linalg.qr(rng.standard_normal((samples, n, n)))
    a = np.einsum("mik,mk,mjk->mij", q, lam, q)
    b = rng.standard_normal((samples, n, n))
    p = np.einsum("mik,mjk->mij", b, b) + 1e-3 * np.eye(n)
    return {"cases": samples, "violations": int(np.sum(~(F_eval(op, a + p) > F_eval(op, a))))}


def condition_n_suite(op: OperatorSpec, samples: int, rng, d_samples: int = 20000, seed: int = 0) -> dict:
    est = estimate_garding_d(op, d_samples, seed)
    n1, n2 = condition_n_constants(op, est.d_hat)
    lam = sample_admissible(op, samples, rng)
    margin = condition_n_margin(op, lam, n1, n2)
    return {
        "cases": samples,
        "d_hat": est.d_hat,
        "N1": n1,
        "N2": n2,
        "violations": int(np.sum(margin < 0)),
    }


def operator_audit(
    op: OperatorSpec, samples: int, seed: int, include_condition_n: bool = True, minor_samples: int | None = None
) -> dict:
    """All operator and cone suites; the costlier ones default to a tenth of ``samples``."""
    rng = np.random.default_rng(seed)
    minor = max(1, samples // 10) if minor_samples is None else minor_samples
    out = {
        "operator": op.to_dict(),
        "homogeneity": homogeneity_suite(op, samples, rng),
        "gradient": gradient_suite(op, minor, rng),
        "concavity": concavity_suite(op, samples, rng),
        "ellipticity": ellipticity_suite(op, samples, rng),
        "monotonicity": monotonicity_suite(op, minor, rng),
        "cone_axioms": axiom_audit(op.cone, samples, seed).to_dict(),
    }
    if include_condition_n and op.kind != "quotient":
        out["condition_n"] = condition_n_suite(op, minor, rng, seed=seed)
    suites = [v for key, v in out.items() if key != "operator"]
    out["total_violations"] = sum(v["total_violations"] if "total_violations" in v else v["violations"] for v in suites)
    return out


# --- condition bridges -----------------------------------------------------


def cns_implies_d_suite(op: OperatorSpec, instances: int, rng) -> dict:
    """Normalized points passing CNS with some R must pass condition D with (2R, 2)."""
    done = 0
    bad = 0
    tried = 0
    while done < instances:
        lam = sample_admissible(op, 2 * instances, rng)
        radii = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), lam.shape[0])) * np.abs(lam).max(axis=1)
        for x, R in zip(lam, radii):
            tried += 1
            if not check_cns(op.cone, x, float(R)).satisfied:
                continue
            rep = check_condition_d(op, x, 2.0 * R, 2.0, normalize=True)
            bad += int(not rep.satisfied)
            done += 1
            if done >= instances:
                break
        if tried > 200 * instances:
            break
    return {"instances": done, "tried": tried, "counterexamples": bad}


def k_hessian_bridge_suite(k: int, n: int, instances: int, rng) -> dict:
    """sigma_{k+1} >= -A sigma_k implies (lam', R) in Gamma_k (and Gamma_{k-1}) for R > A."""
    cone = ConeSpec.gamma_k(k, n)
    lam = sample_cone(cone, instances, rng).points
    s = sigma_all(lam)
    sk1 = s[:, k + 1] if k + 1 <= n else np.zeros(instances)
    need = np.maximum(0.0, -sk1 / s[:, k])
    A = need * (1.0 + rng.random(instances)) + 1e-9
    bad = bad_step = held = 0
    for x, a in zip(lam, A):
        rep = check_k_hessian_lower_bound(x, k, float(a))
        if not rep.satisfied:
            continue
        held += 1
        bad += int(not rep.extra["conclusion_holds"])
        bad_step += int(not rep.extra["gamma_k_minus_1_holds"])
    return {"instances": held, "counterexamples": bad, "gamma_k_minus_1_failures": bad_step}


def pma_bridge_suite(p: int, n: int, instances: int, rng, R: float = 1e-12) -> dict:
    """(p-1)-plurisubharmonic points satisfy CNS on Gamma-hat_p with a tiny R > 0."""
    cone = ConeSpec.gamma_hat_p(p, n)
    lower = ConeSpec.gamma_hat_p(p - 1, n)
    lam = sample_cone(lower, instances, rng).points
    bad = 0
    for x in lam:
        if not min_p_sum(x, p - 1) > 0:
            continue
        bad += int(not check_cns(cone, x, R).satisfied)
    return {"instances": instances, "counterexamples": bad, "R": R}
