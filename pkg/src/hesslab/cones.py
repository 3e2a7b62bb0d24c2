"""Garding cones Gamma_k and p-sum cones Gamma-hat_p: membership, sampling, axiom audits."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from hesslab.symfun import MAX_DIM, as_spectrum, sigma_all, sigma_partial_all


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ConeSpec:
    """An open convex invariant cone in R^n.

    ``kind`` is ``"gamma_k"`` (sigma_1..sigma_k > 0) or ``"gamma_hat_p"``
    (every sum of p entries > 0).
    """

    kind: str
    n: int
    param: int

    def __post_init__(self):
        if self.kind not in ("gamma_k", "gamma_hat_p"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if not 2 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension must be in [2, {MAX_DIM}], got {self.n}")
        if not 1 <= self.param <= self.n:
            raise ValueError(f"cone parameter must be in [1, {self.n}], got {self.param}")

    @classmethod
    def gamma_k(cls, k: int, n: int) -> "ConeSpec":
        return cls("gamma_k", n, k)

    @classmethod
    def gamma_hat_p(cls, p: int, n: int) -> "ConeSpec":
        return cls("gamma_hat_p", n, p)

    @classmethod
    def positive_orthant(cls, n: int) -> "ConeSpec":
        return cls("gamma_k", n, n)

    @property
    def label(self) -> str:
        sym = "Gamma" if self.kind == "gamma_k" else "GammaHat"
        return f"{sym}_{self.param}(n={self.n})"


def _check_dim(cone: ConeSpec, arr: np.ndarray) -> None:
    if arr.shape[-1] != cone.n:
        raise DimensionMismatch(f"{cone.label} expects vectors of length {cone.n}, got {arr.shape[-1]}")


def min_p_sum(lam, p: int) -> np.ndarray | float:
    """Sum of the p smallest entries, i.e. the smallest of all p-sums."""
    arr = np.asarray(lam, dtype=float)
    out = np.sort(arr, axis=-1)[..., :p].sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def cone_margin(cone: ConeSpec, lam) -> np.ndarray | float:
    """Largest m with ``contains(cone, lam, m')`` true for every m' < m.

    For Gamma_k this is min_{1<=j<=k} sigma_j, for Gamma-hat_p the minimal p-sum.
    """
    arr = as_spectrum(lam)
    _check_dim(cone, arr)
    if cone.kind == "gamma_k":
        out = sigma_all(arr)[..., 1 : cone.param + 1].min(axis=-1)
    else:
        out = min_p_sum(arr, cone.param)
    return float(out) if np.ndim(out) == 0 else out


def axis_reach(cone: ConeSpec, lam) -> np.ndarray:
    """How far each entry can be decreased before leaving the cone.

    Entry i of the result is sup{t : lam - t e_i in cone}. Both cone families
    are closed under increasing an entry, so this is the only direction in
    which a coordinate perturbation can exit. For Gamma_k every sigma_j is
    affine in lam_i, which gives the exit time in closed form.
    """
    arr = as_spectrum(lam)
    _check_dim(cone, arr)
    if cone.kind == "gamma_hat_p":
        p = cone.param
        reach = np.empty_like(arr)
        for i in range(cone.n):
            rest = np.delete(arr, i, axis=-1)
            rest = np.sort(rest, axis=-1)[..., : p - 1].sum(axis=-1)
            reach[..., i] = arr[..., i] + rest
        return reach
    full = sigma_all(arr)[..., 1 : cone.param + 1]
    part = sigma_partial_all(arr)[..., :, : cone.param]
    with np.errstate(divide="ignore", invalid="ignore"):
        times = np.where(part > 0, full[..., None, :] / part, np.inf)
    return times.min(axis=-1)


def contains(cone: ConeSpec, lam, margin: float = 0.0) -> bool | np.ndarray:
    """Strict membership with slack: every defining quantity exceeds ``margin``."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    m = cone_margin(cone, lam)
    return bool(m > margin) if np.ndim(m) == 0 else m > margin


def contains_bruteforce(cone: ConeSpec, lam) -> bool:
    """Membership by enumerating every index tuple; reference for the sorted shortcut."""
    arr = as_spectrum(lam, allow_batch=False)
    _check_dim(cone, arr)
    if cone.kind == "gamma_k":
        for j in range(1, cone.param + 1):
            total = sum(np.prod(arr[list(t)]) for t in combinations(range(cone.n), j))
            if not total > 0:
                return False
        return True
    return all(arr[list(t)].sum() > 0 for t in combinations(range(cone.n), cone.param))


@dataclass
class ConeSample:
    points: np.ndarray
    rejection_rate: float
    drawn: int = field(default=0)


def sample_cone(
    cone: ConeSpec,
    count: int,
    rng: np.random.Generator,
    center: float = 1.0,
    spread: tuple[float, float] = (0.05, 10.0),
    margin: float = 0.0,
) -> ConeSample:
    """Rejection-sample ``count`` members ``c*1 + rho*g`` of the cone.

    ``rho`` is log-uniform in ``spread`` so that both near-isotropic and
    strongly skewed points appear; ``c`` is uniform in (0, center].
    """
    if count < 1:
        raise ValueError("count must be positive")
    got: list[np.ndarray] = []
    have = 0
    drawn = 0
    lo, hi = np.log(spread[0]), np.log(spread[1])
    batch = max(64, 2 * count)
    while have < count:
        if drawn > 2000 * count + 10**6:
            raise RuntimeError(f"cone sampler for {cone.label} accepts too few points")
        c = center * (1.0 - rng.random((batch, 1)))
        rho = np.exp(rng.uniform(lo, hi, (batch, 1)))
        pts = c + rho * rng.standard_normal((batch, cone.n))
        ok = contains(cone, pts, margin)
        got.append(pts[ok])
        have += int(ok.sum())
        drawn += batch
    pts = np.concatenate(got)[:count]
    return ConeSample(pts, 1.0 - have / drawn, drawn)


def sample_positive(count: int, n: int, rng: np.random.Generator, lo: float = 1e-3, hi: float = 1e3) -> np.ndarray:
    """Log-uniform samples from the positive orthant Gamma_n."""
    return np.exp(rng.uniform(np.log(lo), np.log(hi), (count, n)))


@dataclass
class AxiomReport:
    cone: str
    samples: int
    seed: int
    positivity: int
    invariance: int
    convexity: int
    inclusion_gamma1: int
    rejection_rate: float

    @property
    def violations(self) -> int:
        return self.positivity + self.invariance + self.convexity + self.inclusion_gamma1

    def to_dict(self) -> dict:
        return {
            "cone": self.cone,
            "samples": self.samples,
            "seed": self.seed,
            "violations": {
                "positivity": self.positivity,
                "invariance": self.invariance,
                "convexity": self.convexity,
                "inclusion_gamma1": self.inclusion_gamma1,
            },
            "total_violations": self.violations,
            "rejection_rate": self.rejection_rate,
        }


def axiom_audit(cone: ConeSpec, sample_count: int, seed: int) -> AxiomReport:
    """Count violations of positivity, permutation invariance, convexity and Gamma ⊂ Gamma_1."""
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    rng = np.random.default_rng(seed)
    lam = sample_cone(cone, sample_count, rng)
    mu = sample_cone(cone, sample_count, rng)
    tau = sample_positive(sample_count, cone.n, rng)
    t = rng.random((sample_count, 1))

    positivity = int(np.sum(~contains(cone, lam.points + tau)))
    perm = np.argsort(rng.random((sample_count, cone.n)), axis=1)
    shuffled = np.take_along_axis(lam.points, perm, axis=1)
    invariance = int(np.sum(contains(cone, shuffled) != contains(cone, lam.points)))
    mix = t * lam.points + (1.0 - t) * mu.points
    convexity = int(np.sum(~contains(cone, mix)))
    inclusion = int(np.sum(~(lam.points.sum(axis=1) > 0)))
    return AxiomReport(
        cone=cone.label,
        samples=sample_count,
        seed=seed,
        positivity=positivity,
        invariance=invariance,
        convexity=convexity,
        inclusion_gamma1=inclusion,
        rejection_rate=0.5 * (lam.rejection_rate + mu.rejection_rate),
    )
