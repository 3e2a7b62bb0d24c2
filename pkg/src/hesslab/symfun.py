"""Elementary symmetric polynomials and the identities built on them.

All functions accept a single spectrum of shape ``(n,)`` or a batch of
shape ``(m, n)``; the trailing axis always holds the eigenvalues.
"""

from __future__ import annotations

from math import comb

import numpy as np

MAX_DIM = 12


def as_spectrum(lam, allow_batch: bool = True) -> np.ndarray:
    """Validate and return ``lam`` as a float array with eigenvalues on the last axis."""
    arr = np.asarray(lam, dtype=float)
    if arr.ndim == 0 or (arr.ndim > 1 and not allow_batch) or arr.ndim > 2:
        raise ValueError(f"spectrum must be a vector, got shape {arr.shape}")
    n = arr.shape[-1]
    if n < 2 or n > MAX_DIM:
        raise ValueError(f"spectrum length must be in [2, {MAX_DIM}], got {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("spectrum contains non-finite entries")
    return arr


def sorted_desc(lam) -> np.ndarray:
    """Return the spectrum in descending order (lam_1 >= ... >= lam_n)."""
    arr = as_spectrum(lam)
    return -np.sort(-arr, axis=-1)


def _coefficients(arr: np.ndarray) -> np.ndarray:
    # coefficients of prod_i (x + lam_i), highest power first, built one factor at a time
    n = arr.shape[-1]
    out = np.zeros(arr.shape[:-1] + (n + 1,))
    out[..., 0] = 1.0
    for i in range(n):
        li = arr[..., i : i + 1]
        out[..., 1 : i + 2] = out[..., 1 : i + 2] + li * out[..., 0 : i + 1]
    return out


def sigma_all(lam) -> np.ndarray:
    """(sigma_0, ..., sigma_n) of ``lam`` via the product recurrence, O(n^2).

    >>> sigma_all([1, 2, 3]).tolist()
    [1.0, 6.0, 11.0, 6.0]
    """
    arr = as_spectrum(lam)
    return _coefficients(arr)


def sigma(j: int, lam) -> np.ndarray | float:
    """sigma_j of ``lam``; zero for j > n, one for j == 0."""
    arr = as_spectrum(lam)
    n = arr.shape[-1]
    if j < 0:
        raise ValueError(f"degree must be nonnegative, got {j}")
    if j > n:
        out = np.zeros(arr.shape[:-1])
    else:
        out = _coefficients(arr)[..., j]
    return float(out) if out.ndim == 0 else out


def deleted(lam, i: int) -> np.ndarray:
    """``lam`` with entry ``i`` (0-based) removed along the last axis."""
    arr = np.asarray(lam, dtype=float)
    return np.delete(arr, i, axis=-1)


def sigma_partial_all(lam) -> np.ndarray:
    """Table ``S[..., i, j] = sigma_j(lam | i)`` for j = 0..n-1.

    ``sigma_j(lam | i)`` is sigma_j of the vector with entry i deleted,
    which equals the partial derivative of sigma_{j+1} in lam_i.
    """
    arr = as_spectrum(lam)
    n = arr.shape[-1]
    rows = [_coefficients(np.delete(arr, i, axis=-1)) for i in range(n)]
    return np.stack(rows, axis=-2)


def sigma_partial(j: int, lam, i: int) -> float:
    """sigma_j(lam | i): sigma_j with the i-th entry (1-based) deleted."""
    arr = as_spectrum(lam, allow_batch=False)
    n = arr.shape[0]
    if not 0 <= j <= n - 1:
        raise ValueError(f"degree j must lie in [0, {n - 1}], got {j}")
    if not 1 <= i <= n:
        raise IndexError(f"index i must lie in [1, {n}], got {i}")
    return float(_coefficients(np.delete(arr, i - 1))[j])


def sigma_scale(lam) -> np.ndarray | float:
    """max(1, max_j |sigma_j|), the reference scale for relative tolerances."""
    s = np.max(np.abs(sigma_all(lam)), axis=-1)
    s = np.maximum(s, 1.0)
    return float(s) if np.ndim(s) == 0 else s


def newton_residual(mu, j: int) -> np.ndarray | float:
    """[sigma_j/C(n,j)]^2 - [sigma_{j-1}/C(n,j-1)] [sigma_{j+1}/C(n,j+1)].

    Nonnegative for every real vector, not only inside a cone.
    """
    arr = as_spectrum(mu)
    n = arr.shape[-1]
    if not 1 <= j <= n - 1:
        raise ValueError(f"degree j must lie in [1, {n - 1}], got {j}")
    s = _coefficients(arr)
    a = s[..., j] / comb(n, j)
    b = s[..., j - 1] / comb(n, j - 1)
    c = s[..., j + 1] / comb(n, j + 1)
    out = a * a - b * c
    return float(out) if np.ndim(out) == 0 else out


def newton_check(mu, j: int, tol: float = 1e-12) -> tuple[float, bool]:
    """Newton's inequality at a single vector: ``(residual, holds)``.

    ``holds`` allows ``-tol`` times the squared sigma scale of ``mu``.
    """
    arr = as_spectrum(mu, allow_batch=False)
    res = newton_residual(arr, j)
    scale = sigma_scale(arr)
    return res, bool(res >= -tol * scale * scale)


def splitting_defect(lam, i: int, j: int) -> float:
    """|sigma_j(lam) - sigma_{j-1}(lam|i) lam_i - sigma_j(lam|i)| for 1-based i."""
    arr = as_spectrum(lam, allow_batch=False)
    n = arr.shape[0]
    if not 1 <= j <= n:
        raise ValueError(f"degree j must lie in [1, {n}], got {j}")
    full = _coefficients(arr)
    part = _coefficients(np.delete(arr, i - 1))
    rest = part[j] if j <= n - 1 else 0.0
    return float(abs(full[j] - part[j - 1] * arr[i - 1] - rest))
