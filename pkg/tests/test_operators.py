import math
import warnings

import numpy as np
import pytest

from hesslab.audit import operator_family
from hesslab.operators import (
    NotAdmissible,
    OperatorSpec,
    F_and_linearization,
    F_eval,
    condition_n_constants,
    eigen_sym,
    eigen_sym_batch,
    estimate_garding_d,
    f_eval,
    f_grad,
    f_one,
    homogeneity_residual,
    normalize,
    sample_admissible,
)

MA2 = OperatorSpec.monge_ampere(2)
KH23 = OperatorSpec.k_hessian(2, 3)
PMA23 = OperatorSpec.p_monge_ampere(2, 3)


def random_rotation(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def test_f_eval_examples():
    assert f_eval(MA2, (2, 2)) == pytest.approx(2.0)
    assert f_eval(KH23, (1, 1, 1)) == pytest.approx(math.sqrt(3))
    assert f_eval(PMA23, (1, 1, 1)) == pytest.approx(2.0)


def test_f_one_closed_forms():
    for n in range(2, 7):
        assert f_one(OperatorSpec.monge_ampere(n)) == pytest.approx(1.0)
        for k in range(1, n + 1):
            assert f_one(OperatorSpec.k_hessian(k, n)) == pytest.approx(math.comb(n, k) ** (1 / k))
        for p in range(1, n + 1):
            assert f_one(OperatorSpec.p_monge_ampere(p, n)) == pytest.approx(p)
        for k in range(2, n + 1):
            q = OperatorSpec.hessian_quotient(k, 1, n)
            assert f_one(q) == pytest.approx((math.comb(n, k) / n) ** (1 / (k - 1)))


def test_f_grad_examples():
    np.testing.assert_allclose(f_grad(KH23, (1, 1, 1)), [1 / math.sqrt(3)] * 3, rtol=1e-13)
    g = f_grad(MA2, (2, 2))
    np.testing.assert_allclose(g, [0.5, 0.5], rtol=1e-14)
    assert float(g @ np.array([2.0, 2.0])) == pytest.approx(f_eval(MA2, (2, 2)))


@pytest.mark.parametrize("op", operator_family(4), ids=lambda o: o.label)
def test_gradient_symmetric_at_ones(op):
    g = f_grad(op, np.ones(op.n))
    np.testing.assert_allclose(g, g[0], rtol=1e-13)


def test_not_admissible_raises():
    with pytest.raises(NotAdmissible):
        f_eval(MA2, (1, -1))
    with pytest.raises(NotAdmissible):
        f_grad(KH23, (-1, 2, 2))


def test_operator_parameter_validation():
    with pytest.raises(ValueError):
        OperatorSpec.hessian_quotient(2, 2, 3)
    with pytest.raises(ValueError):
        OperatorSpec.p_monge_ampere(4, 3)
    with pytest.raises(ValueError):
        OperatorSpec.k_hessian(0, 3)


def test_pma_matches_subset_product(rng):
    from itertools import combinations

    lam = sample_admissible(PMA23, 20, rng)
    for x in lam:
        sums = [x[list(t)].sum() for t in combinations(range(3), 2)]
        assert f_eval(PMA23, x) == pytest.approx(np.prod(sums) ** (1 / 3), rel=1e-12)


def test_normalize_and_homogeneity(rng):
    op = OperatorSpec.k_hessian(2, 4)
    lam = sample_admissible(op, 10000, rng, normalized=False)
    assert np.max(np.abs(homogeneity_residual(op, lam))) <= 1e-10
    np.testing.assert_allclose(f_eval(op, normalize(op, lam[:10])), 1.0, rtol=1e-12)
    q = OperatorSpec.hessian_quotient(2, 1, 3)
    lam = sample_admissible(q, 2000, rng, normalized=False)
    assert np.max(np.abs(homogeneity_residual(q, lam))) <= 1e-10
    assert abs(homogeneity_residual(q, np.ones(3))) <= 1e-14


def test_eigen_examples():
    lam, q = eigen_sym(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(lam, [3, 2, 1])
    assert np.allclose(np.abs(q), np.abs(q).round())
    lam, _ = eigen_sym(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(lam, [1, -1], atol=1e-15)


def test_jacobi_against_numpy_oracle(rng):
    a = rng.normal(size=(200, 6, 6))
    a = a + a.transpose(0, 2, 1)
    lam, q = eigen_sym_batch(a)
    ref = np.linalg.eigvalsh(a)[:, ::-1]
    np.testing.assert_allclose(lam, ref, atol=1e-12)
    recon = np.einsum("mik,mk,mjk->mij", q, lam, q)
    assert np.max(np.abs(recon - a)) <= 1e-12
    assert np.max(np.abs(np.einsum("mki,mkj->mij", q, q) - np.eye(6))) <= 1e-12


def test_eigen_rejects_non_finite():
    with pytest.raises(ValueError):
        eigen_sym(np.array([[np.inf, 0.0], [0.0, 1.0]]))


def test_linearization_at_identity():
    for op in (MA2, KH23, PMA23):
        F, L = F_and_linearization(op, np.eye(op.n))
        assert F == pytest.approx(f_one(op))
        g = f_grad(op, np.ones(op.n))[0]
        np.testing.assert_allclose(L, g * np.eye(op.n), atol=1e-14)


def test_linearization_diagonal_case():
    F, L = F_and_linearization(MA2, np.diag([1.0, 2.0]))
    assert F == pytest.approx(math.sqrt(2))
    np.testing.assert_allclose(L, np.diag(f_grad(MA2, (2.0, 1.0))[::-1]), rtol=1e-13)


def fd_linearization(op, a, h=1e-6):
    n = a.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            e = np.zeros((n, n))
            e[i, j] = e[j, i] = 1.0
            d = (F_eval(op, a + h * e) - F_eval(op, a - h * e)) / (2 * h)
            out[i, j] = out[j, i] = d if i == j else d / 2
    return out


@pytest.mark.parametrize("op", [MA2, KH23, PMA23, OperatorSpec.hessian_quotient(3, 1, 3), OperatorSpec.k_hessian(2, 4)], ids=lambda o: o.label)
def test_linearization_matches_finite_differences(op, rng):
    n = op.n
    for lam in sample_admissible(op, 5, rng, spread=(0.05, 1.0)):
        r = random_rotation(rng, n)
        a = r @ np.diag(lam) @ r.T
        _, L = F_and_linearization(op, a)
        np.testing.assert_allclose(L, fd_linearization(op, a), rtol=1e-5, atol=1e-5 * np.abs(L).max())
    lam = np.full(n, 1.3)
    lam[0] = 2.1
    r = random_rotation(rng, n)
    a = r @ np.diag(lam) @ r.T
    _, L = F_and_linearization(op, a)
    np.testing.assert_allclose(L, fd_linearization(op, a), rtol=1e-5, atol=1e-5 * np.abs(L).max())


def test_rotation_invariance(rng):
    for op in (KH23, PMA23):
        lam = sample_admissible(op, 1, rng)[0]
        a = np.diag(lam)
        r = random_rotation(rng, 3)
        F1, L1 = F_and_linearization(op, a)
        F2, L2 = F_and_linearization(op, r @ a @ r.T)
        assert F2 == pytest.approx(F1, rel=1e-13)
        np.testing.assert_allclose(L2, r @ L1 @ r.T, atol=1e-12)


def test_garding_estimates():
    est = estimate_garding_d(OperatorSpec.monge_ampere(3), 100000, 1)
    assert 0.95 <= est.d_hat <= 1.05
    n1, n2 = condition_n_constants(OperatorSpec.monge_ampere(3), est.d_hat)
    assert n1 == pytest.approx(8.0, rel=0.15) and n2 == 2
    for op in (OperatorSpec.k_hessian(2, 4), OperatorSpec.k_hessian(3, 3), PMA23):
        assert estimate_garding_d(op, 20000, 2).d_hat > 0


def test_garding_quotient_warns():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = estimate_garding_d(OperatorSpec.hessian_quotient(2, 1, 3), 2000, 0)
    assert est.unsupported
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_condition_n_constants():
    assert condition_n_constants(MA2, 1.0) == (4.0, 1.0)
    assert condition_n_constants(OperatorSpec.monge_ampere(3), 1.0) == (8.0, 2.0)
    with pytest.raises(ValueError):
        condition_n_constants(MA2, 0.0)
