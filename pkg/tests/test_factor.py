import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from saddlekrylov.factor import (Factorization, SingularMatrixError, factor_solve,
                                 factorize_lu, factorize_symmetric_indefinite, inertia_of,
                                 refine_solve)
from saddlekrylov.linops import DimensionError, MatrixStorage, assemble_block_2x2
from saddlekrylov.problems import counterexample_system

K3 = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, -1.0]])


def sym(a):
    return MatrixStorage.from_dense(a, symmetric=True)


def test_inertia_small():
    assert factorize_symmetric_indefinite(sym(K3)).inertia == (2, 1, 0)
    assert factorize_symmetric_indefinite(sym(np.eye(3))).inertia == (3, 0, 0)


def test_counterexample_has_zero_pivot():
    # the counterexample matrix is nonsymmetric; its symmetric relative with
    # G = diag(A) keeps the zero second row
    s = counterexample_system()
    K = assemble_block_2x2(sym(np.diag(s.A.matrix.diagonal())), s.B, s.C)
    assert np.all(K.toarray()[1] == 0.0)
    F = factorize_symmetric_indefinite(K)
    assert F.inertia[2] >= 1
    assert F.singular
    with pytest.raises(SingularMatrixError):
        F.solve(np.ones(5))


def test_counterexample_matrix_lu_singular():
    s = counterexample_system()
    F = factorize_lu(s.matrix())
    assert F.singular and F.inertia is None


def test_require_nonsingular():
    with pytest.raises(SingularMatrixError):
        factorize_symmetric_indefinite(sym(np.zeros((2, 2))), require_nonsingular=True)


def test_needs_symmetric_tag():
    with pytest.raises(ValueError):
        factorize_symmetric_indefinite(MatrixStorage.from_dense(np.eye(2)))


def test_solve_examples():
    F = factorize_symmetric_indefinite(sym(np.eye(3)))
    assert np.array_equal(factor_solve(F, np.array([1.0, 2.0, 3.0])), [1, 2, 3])
    F = factorize_symmetric_indefinite(sym(K3))
    assert np.allclose(factor_solve(F, np.array([1.0, 0.0, 0.0])), [0.5, 0.0, 0.5], atol=1e-15)
    with pytest.raises(DimensionError):
        factor_solve(F, np.ones(2))


def test_refine_exact_first_solve():
    F = factorize_symmetric_indefinite(sym(np.eye(3)))
    _, res, steps = refine_solve(F, sym(np.eye(3)), np.array([1.0, 2.0, 3.0]), 1e-8, 2)
    assert steps == 0 and res == 0.0


def _perturbed(M):
    lu, d, perm = sla.ldl(M, lower=True)
    return Factorization.from_ldl(lu, d * (1 + 1e-6), perm)


def test_refine_one_step_after_perturbation():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 6))
    M = X + X.T + 10 * np.eye(6)
    F = _perturbed(M)
    b = rng.standard_normal(6)
    z0 = F.solve(b)
    assert np.linalg.norm(b - M @ z0) / np.linalg.norm(b) > 1e-8
    z, res, steps = refine_solve(F, sym(M), b, 1e-8, 5)
    assert steps == 1 and res <= 1e-8
    assert np.allclose(M @ z, b)


def test_refine_capped():
    M = np.diag([1.0, 2.0, 3.0])
    F = _perturbed(M)
    b = np.ones(3)
    _, res, steps = refine_solve(F, sym(M), b, 1e-12, 0)
    assert steps == 0
    assert res == pytest.approx(np.linalg.norm(b - M @ F.solve(b)) / np.sqrt(3))
    assert res > 1e-12


def test_refine_argument_checks():
    F = factorize_symmetric_indefinite(sym(np.eye(2)))
    with pytest.raises(ValueError):
        refine_solve(F, sym(np.eye(2)), np.ones(2), 0.0, 1)
    with pytest.raises(ValueError):
        refine_solve(F, sym(np.eye(2)), np.ones(2), 1e-8, -1)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1), st.integers(0, 5))
def test_inertia_matches_eigenvalues(n, seed, nzero):
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    lam = rng.uniform(0.5, 2.0, n) * rng.choice([-1.0, 1.0], n)
    lam[:min(nzero, n)] = 0.0
    M = (Q * lam) @ Q.T
    M = (M + M.T) / 2
    expected = (int(np.sum(lam > 0)), int(np.sum(lam < 0)), int(np.sum(lam == 0)))
    assert inertia_of(M) == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_refine_residual_nonincreasing(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    M = X + X.T + n * np.eye(n)
    F = _perturbed(M)
    b = rng.standard_normal(n)
    prev = np.inf
    for steps in range(4):
        _, res, done = refine_solve(F, sym(M), b, 1e-300, steps)
        assert res <= prev
        prev = res


def test_lu_solves_nonsymmetric():
    M = np.array([[2.0, 1.0], [0.0, 3.0]])
    F = factorize_lu(MatrixStorage.from_dense(M))
    assert np.allclose(F.solve(np.array([3.0, 3.0])), [1.0, 1.0])
