"""Concave elliptic Hessian operators F(A) = f(lambda(A)).

Four families are supported:

* ``ma``        Monge-Ampere, det^{1/n} on the positive orthant
* ``khessian``  sigma_k^{1/k} on Gamma_k
* ``quotient``  (sigma_k / sigma_l)^{1/(k-l)} on Gamma_k
* ``pma``       p-Monge-Ampere, prod of all p-sums to the power 1/C(n,p), on Gamma-hat_p

Eigenvalue functions are vectorized over a leading batch axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from math import comb

import numpy as np

from hesslab.cones import ConeSpec, cone_margin, sample_cone, sample_positive
from hesslab.symfun import MAX_DIM, as_spectrum, sigma_all, sigma_partial_all

KINDS = ("ma", "khessian", "quotient", "pma")


class NotAdmissible(ValueError):
    """Raised when an eigenvalue vector lies outside the operator's cone."""


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    n: int
    k: int | None = None
    l: int | None = None
    p: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        if not 2 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension must be in [2, {MAX_DIM}], got {self.n}")
        if self.kind in ("khessian", "quotient"):
            if self.k is None or not 1 <= self.k <= self.n:
                raise ValueError(f"k must be in [1, {self.n}], got {self.k}")
        if self.kind == "quotient":
            if self.l is None or not 1 <= self.l < self.k:
                raise ValueError(f"quotient needs 1 <= l < k, got l={self.l}, k={self.k}")
        if self.kind == "pma":
            if self.p is None or not 1 <= self.p <= self.n:
                raise ValueError(f"p must be in [1, {self.n}], got {self.p}")

    @classmethod
    def monge_ampere(cls, n: int) -> "OperatorSpec":
        return cls("ma", n)

    @classmethod
    def k_hessian(cls, k: int, n: int) -> "OperatorSpec":
        return cls("khessian", n, k=k)

    @classmethod
    def hessian_quotient(cls, k: int, l: int, n: int) -> "OperatorSpec":
        return cls("quotient", n, k=k, l=l)

    @classmethod
    def p_monge_ampere(cls, p: int, n: int) -> "OperatorSpec":
        return cls("pma", n, p=p)

    @property
    def cone(self) -> ConeSpec:
        if self.kind == "ma":
            return ConeSpec.positive_orthant(self.n)
        if self.kind == "pma":
            return ConeSpec.gamma_hat_p(self.p, self.n)
        return ConeSpec.gamma_k(self.k, self.n)

    @property
    def label(self) -> str:
        if self.kind == "ma":
            return f"MA(n={self.n})"
        if self.kind == "khessian":
            return f"KHessian(k={self.k}, n={self.n})"
        if self.kind == "quotient":
            return f"Quotient(k={self.k}, l={self.l}, n={self.n})"
        return f"PMA(p={self.p}, n={self.n})"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "n": self.n}
        for key in ("k", "l", "p"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d

    @cached_property
    def _incidence(self) -> np.ndarray:
        # rows: p-tuples, columns: coordinates
        tuples = list(combinations(range(self.n), self.p))
        inc = np.zeros((len(tuples), self.n))
        for r, t in enumerate(tuples):
            inc[r, list(t)] = 1.0
        return inc


def f_one(op: OperatorSpec) -> float:
    """f(1, ..., 1) in closed form."""
    n = op.n
    if op.kind == "ma":
        return 1.0
    if op.kind == "khessian":
        return comb(n, op.k) ** (1.0 / op.k)
    if op.kind == "quotient":
        return (comb(n, op.k) / comb(n, op.l)) ** (1.0 / (op.k - op.l))
    return float(op.p)


def _require_admissible(op: OperatorSpec, arr: np.ndarray) -> None:
    if arr.shape[-1] != op.n:
        raise ValueError(f"{op.label} expects spectra of length {op.n}, got {arr.shape[-1]}")
    ok = np.asarray(cone_margin(op.cone, arr) > 0)
    if not ok.all():
        bad = np.flatnonzero(~ok.ravel())[0] if ok.ndim else 0
        raise NotAdmissible(f"spectrum #{bad} is outside {op.cone.label}")


def f_and_grad_unchecked(op: OperatorSpec, arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(f, grad f) for a batch ``arr`` of shape (m, n) assumed admissible."""
    if op.kind == "ma":
        logf = np.mean(np.log(arr), axis=-1)
        f = np.exp(logf)
        return f, f[..., None] / (op.n * arr)
    if op.kind == "pma":
        inc = op._incidence
        sums = arr @ inc.T
        m = inc.shape[0]
        f = np.exp(np.mean(np.log(sums), axis=-1))
        return f, (f / m)[..., None] * ((1.0 / sums) @ inc)
    k = op.k
    full = sigma_all(arr)
    part = sigma_partial_all(arr)
    sk = full[..., k]
    if op.kind == "khessian":
        f = np.exp(np.log(sk) / k)
        return f, (f / (k * sk))[..., None] * part[..., k - 1]
    l = op.l
    sl = full[..., l]
    f = np.exp((np.log(sk) - np.log(sl)) / (k - l))
    g = part[..., k - 1] / sk[..., None] - part[..., l - 1] / sl[..., None]
    return f, (f / (k - l))[..., None] * g


def f_eval(op: OperatorSpec, lam) -> np.ndarray | float:
    """f(lambda); raises NotAdmissible outside the cone."""
    arr = as_spectrum(lam)
    _require_admissible(op, arr)
    f, _ = f_and_grad_unchecked(op, np.atleast_2d(arr))
    return float(f[0]) if arr.ndim == 1 else f


def f_grad(op: OperatorSpec, lam) -> np.ndarray:
    """Analytic gradient (f_1, ..., f_n); every entry is positive on the cone."""
    arr = as_spectrum(lam)
    _require_admissible(op, arr)
    _, g = f_and_grad_unchecked(op, np.atleast_2d(arr))
    return g[0] if arr.ndim == 1 else g


def normalize(op: OperatorSpec, lam) -> np.ndarray:
    """Rescale admissible spectra to f = 1 using degree-one homogeneity."""
    arr = as_spectrum(lam)
    f = f_eval(op, arr)
    return arr / (f if arr.ndim == 1 else np.asarray(f)[:, None])


def homogeneity_residual(op: OperatorSpec, lam) -> np.ndarray | float:
    """|sum_i f_i(lambda) lambda_i - f(lambda)|."""
    arr = as_spectrum(lam)
    _require_admissible(op, arr)
    f, g = f_and_grad_unchecked(op, np.atleast_2d(arr))
    res = np.abs(np.sum(g * np.atleast_2d(arr), axis=-1) - f)
    return float(res[0]) if arr.ndim == 1 else res


# --- symmetric eigensolver -------------------------------------------------


def _jacobi_batch(a: np.ndarray, tol: float, max_sweeps: int) -> tuple[np.ndarray, np.ndarray, int]:
    m, n, _ = a.shape
    a = a.copy()
    q = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    norm = np.sqrt(np.sum(a * a, axis=(1, 2)))
    thresh = tol * norm
    iu = np.triu_indices(n, 1)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        off = np.sqrt(2.0 * np.sum(a[:, iu[0], iu[1]] ** 2, axis=1))
        active = off > thresh
        if not active.any():
            sweeps -= 1
            break
        idx = np.flatnonzero(active)
        b = a[idx]
        v = q[idx]
        for p in range(n - 1):
            for r in range(p + 1, n):
                apq = b[:, p, r]
                nz = apq != 0.0
                if not nz.any():
                    continue
                theta = np.zeros_like(apq)
                theta[nz] = (b[nz, r, r] - b[nz, p, p]) / (2.0 * apq[nz])
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
                t[~nz] = 0.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cc, ss = c[:, None], s[:, None]
                colp, colr = b[:, :, p].copy(), b[:, :, r].copy()
                b[:, :, p] = cc * colp - ss * colr
                b[:, :, r] = ss * colp + cc * colr
                rowp, rowr = b[:, p, :].copy(), b[:, r, :].copy()
                b[:, p, :] = cc * rowp - ss * rowr
                b[:, r, :] = ss * rowp + cc * rowr
                b[nz, p, r] = 0.0
                b[nz, r, p] = 0.0
                qp, qr = v[:, :, p].copy(), v[:, :, r].copy()
                v[:, :, p] = cc * qp - ss * qr
                v[:, :, r] = ss * qp + cc * qr
        a[idx] = b
        q[idx] = v
    lam = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(-lam, axis=1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=1)
    q = np.take_along_axis(q, order[:, None, :], axis=2)
    return lam, q, sweeps


def eigen_sym_batch(a, tol: float = 1e-15, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi on a stack of symmetric matrices, shape (m, n, n).

    Returns eigenvalues sorted descending, shape (m, n), and orthogonal
    eigenvector matrices with ``A = Q diag(lam) Q^T``.
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite entries")
    arr = 0.5 * (arr + np.swapaxes(arr, 1, 2))
    lam, q, _ = _jacobi_batch(arr, tol, max_sweeps)
    return lam, q


def eigen_sym(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of one symmetric matrix, eigenvalues descending."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    lam, q = eigen_sym_batch(arr[None])
    return lam[0], q[0]


def F_and_linearization(op: OperatorSpec, a) -> tuple[float | np.ndarray, np.ndarray]:
    """F(A) and the matrix of first derivatives dF/dA_ij in the original frame.

    Accepts one matrix (n, n) or a stack (m, n, n).
    """
    arr = np.asarray(a, dtype=float)
    single = arr.ndim == 2
    stack = arr[None] if single else arr
    lam, q = eigen_sym_batch(stack)
    _require_admissible(op, lam)
    f, g = f_and_grad_unchecked(op, lam)
    lin = np.einsum("mik,mk,mjk->mij", q, g, q)
    if single:
        return float(f[0]), lin[0]
    return f, lin


def F_eval(op: OperatorSpec, a) -> float | np.ndarray:
    return F_and_linearization(op, a)[0]


# --- condition N -----------------------------------------------------------


def sample_admissible(
    op: OperatorSpec, count: int, rng: np.random.Generator, normalized: bool = True, **kw
) -> np.ndarray:
    """Random cone members, optionally rescaled to f = 1."""
    pts = sample_cone(op.cone, count, rng, **kw).points
    if normalized:
        f, _ = f_and_grad_unchecked(op, pts)
        pts = pts / f[:, None]
    return pts


@dataclass
class GardingEstimate:
    d_hat: float
    samples: int
    seed: int
    unsupported: bool
    worst_lambda: np.ndarray
    worst_tau: np.ndarray

    def to_dict(self) -> dict:
        return {
            "d_hat": self.d_hat,
            "samples": self.samples,
            "seed": self.seed,
            "unsupported_operator": self.unsupported,
            "worst_lambda": self.worst_lambda.tolist(),
            "worst_tau": self.worst_tau.tolist(),
        }


def garding_ratio(op: OperatorSpec, lam: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """(f(lam + tau) - f(lam)) / (prod tau)^{1/n} for batches of pairs."""
    f0, _ = f_and_grad_unchecked(op, lam)
    f1, _ = f_and_grad_unchecked(op, lam + tau)
    gm = np.exp(np.mean(np.log(tau), axis=-1))
    return (f1 - f0) / gm


def estimate_garding_d(op: OperatorSpec, sample_count: int, seed: int, chunk: int = 20000) -> GardingEstimate:
    """Sampled infimum of the Garding-type ratio over f(lam)=1 and positive tau.

    Tau entries are log-uniform in [1e-3, 1e3]. For the Hessian quotient the
    bound is not expected to hold; the observed infimum is still returned
    with ``unsupported=True`` and a warning.
    """
    unsupported = op.kind == "quotient"
    if unsupported:
        warnings.warn("Hessian quotient operators are not covered by the Garding-type bound", RuntimeWarning)
    rng = np.random.default_rng(seed)
    best = np.inf
    worst_lam = worst_tau = None
    left = sample_count
    while left > 0:
        m = min(chunk, left)
        lam = sample_admissible(op, m, rng)
        tau = sample_positive(m, op.n, rng)
        r = garding_ratio(op, lam, tau)
        i = int(np.argmin(r))
        if r[i] < best:
            best, worst_lam, worst_tau = float(r[i]), lam[i], tau[i]
        left -= m
    return GardingEstimate(best, sample_count, seed, unsupported, worst_lam, worst_tau)


def condition_n_constants(op: OperatorSpec, d: float) -> tuple[float, float]:
    """(N1, N2) = ((2/d)^n, n-1) from the Garding constant d."""
    if not d > 0:
        raise ValueError(f"Garding constant must be positive, got {d}")
    return (2.0 / d) ** op.n, float(op.n - 1)


def condition_n_margin(op: OperatorSpec, lam: np.ndarray, n1: float, n2: float) -> np.ndarray:
    """min_i f_i - 1/(N1 C^N2) with C = sum_i f_i, at normalized spectra."""
    _, g = f_and_grad_unchecked(op, np.atleast_2d(lam))
    c = g.sum(axis=-1)
    return g.min(axis=-1) - 1.0 / (n1 * c**n2)
