import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import instance, rel
from saddlekrylov.factor import SingularMatrixError
from saddlekrylov.linops import assemble_block_2x2
from saddlekrylov.oracle import (SIZE_CAP, decompose_c, direct_solve, nullspace_conditions,
                                 full_space_arnoldi, full_space_lanczos, nullspace_basis,
                                 preconditioned_spectrum, projected_arnoldi, projected_lanczos,
                                 projector_pg, reduced_min_eigenvalue, reduced_solution)
from saddlekrylov.problems import counterexample_system, gen_random_system
from saddlekrylov.saddle import (AssumptionWarning, RegularizedSaddleSystem, build_constraint_preconditioner,
                                 check_assumption_2_1)


def test_decompose_identity():
    d = decompose_c(np.eye(2))
    assert d.p == 2
    assert np.allclose(d.F, np.eye(2))
    assert np.allclose(d.E.T @ d.E, np.eye(2))


def test_decompose_rank_one():
    d = decompose_c(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert d.p == 1 and np.allclose(d.f, [1.0])
    assert np.allclose(np.abs(d.E.ravel()), [1.0, 0.0])


def test_decompose_indefinite():
    d = decompose_c(np.diag([2.0, -3.0]))
    assert d.p == 2 and sorted(np.sign(d.f)) == [-1.0, 1.0]
    assert np.allclose((d.E * d.f) @ d.E.T, np.diag([2.0, -3.0]))


def test_decompose_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        decompose_c(np.array([[1.0, 1.0], [0.0, 1.0]]))


def tiny(b1=(1.0, 1.0), b2=(0.0,)):
    return RegularizedSaddleSystem(np.eye(2), np.array([[1.0, 0.0]]), np.array([[1.0]]),
                                   np.array(b1), np.array(b2))


def test_zero_start_terminates():
    sys_ = tiny((0.0, 0.0))
    cdec = decompose_c(sys_.C)
    G = np.eye(2)
    assert projected_lanczos(sys_, G, cdec).beta[0] == 0.0
    assert projected_arnoldi(sys_, G, cdec).h10 == 0.0
    assert full_space_lanczos(sys_, G).beta[0] == 0.0
    assert full_space_arnoldi(sys_, G).h10 == 0.0


def test_direct_solve_examples():
    x, y = direct_solve(tiny())
    assert np.allclose(x, [0.5, 1.0]) and np.allclose(y, [0.5])
    s = RegularizedSaddleSystem(np.array([[2.0]]), np.array([[1.0]]), np.array([[1.0]]),
                                np.array([3.0]), np.array([0.0]))
    x, y = direct_solve(s)
    assert np.allclose(x, [1.0]) and np.allclose(y, [1.0])


def test_counterexample_singular_despite_conditions():
    s = counterexample_system()
    assert nullspace_conditions(s) == (True, True)
    with pytest.raises(SingularMatrixError):
        direct_solve(s)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 19), st.integers(0, 2**32 - 1))
def test_full_space_alpha_identity(seed, vseed):
    # for [p; -q] with B p + C q = 0, the K-quadratic form equals p^T A p + q^T C q
    sys_, _, _, _ = instance(seed)
    rng = np.random.default_rng((vseed, 2))
    q = rng.standard_normal(sys_.m)
    Bd = sys_.B.toarray()
    p = -np.linalg.lstsq(Bd, sys_.C.matvec(q), rcond=None)[0]
    Z = nullspace_basis(sys_.B, decompose_c(np.zeros((sys_.m, sys_.m))))
    p = p + Z.Z1 @ rng.standard_normal(Z.Z.shape[1])
    assert np.linalg.norm(Bd @ p + sys_.C.matvec(q)) <= 1e-12 * np.linalg.norm(p)
    v = np.concatenate([p, -q])
    K = sys_.matrix().toarray()
    lhs = v @ K @ v
    rhs = p @ sys_.A.apply(p) + q @ sys_.C.matvec(q)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * abs(v @ np.abs(K) @ np.abs(v)))


def test_projected_matches_full_space():
    sys_, G, _, _ = instance(6)
    cdec = decompose_c(sys_.C)
    a = projected_lanczos(sys_, G, cdec, maxiter=15)
    b = full_space_lanczos(sys_, G, maxiter=15)
    assert rel(a.alpha, b.alpha) <= 1e-8 and rel(a.beta, b.beta) <= 1e-8
    for u, v in zip(a.v1, b.v1):
        assert rel(u, v) <= 1e-8


def test_spectrum_exact_preconditioner():
    sys_, _, _, _ = instance(0)
    K = sys_.matrix()
    rep = preconditioned_spectrum(K, K)
    assert rep.count_near_one == sys_.n + sys_.m
    assert np.all(rep.eigenvalues == 1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 19))
def test_spectrum_multiplicity_and_reality(seed):
    sys_, G, P, p = instance(seed)
    rep = preconditioned_spectrum(P.matrix, sys_.matrix())
    assert rep.count_near_one >= 2 * sys_.m - p
    assert check_assumption_2_1(P).holds
    assert rep.max_imag <= 1e-8


def test_spectrum_matches_plain_eigensolve_off_one():
    sys_, G, P, _ = instance(2)
    Pm, K = P.matrix.toarray(), sys_.matrix().toarray()
    plain = np.sort_complex(np.linalg.eigvals(np.linalg.solve(Pm, K)))
    ours = preconditioned_spectrum(Pm, K).eigenvalues
    far = [lam for lam in ours if abs(lam - 1) > 1e-3]
    for lam in far:
        assert np.min(np.abs(plain - lam)) <= 1e-8 * abs(lam)


def test_size_cap():
    n = SIZE_CAP
    K = np.eye(n + 1)
    with pytest.raises(ValueError):
        preconditioned_spectrum(K, K)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 19), st.booleans())
def test_reduced_solution_consistency(seed, with_b2):
    sys_, _, _, _ = instance(seed, True, with_b2)
    cdec = decompose_c(sys_.C)
    x, _ = direct_solve(sys_)
    assert rel(reduced_solution(sys_, cdec), x) <= 1e-8


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("ok", [True, False])
def test_assumption_equals_reduced_positivity(seed, ok):
    sys_, G = gen_random_system(20, 6, 900 + seed, C_rank=seed % 7, assumption_ok=ok)
    if ok:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            P = build_constraint_preconditioner(G, sys_.B, sys_.C)
    else:
        with pytest.warns(AssumptionWarning):
            P = build_constraint_preconditioner(G, sys_.B, sys_.C)
    holds = check_assumption_2_1(P).holds
    assert holds == ok
    assert (reduced_min_eigenvalue(G, sys_.B, decompose_c(sys_.C)) > 0) == holds


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 19))
def test_projector_idempotent(seed):
    sys_, G, _, _ = instance(seed)
    PG, M = projector_pg(G, sys_.B, decompose_c(sys_.C))
    Q = PG @ M
    assert np.abs(Q @ Q - Q).max() <= 1e-8 * np.abs(Q).max()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 19), st.booleans())
def test_generated_systems_pass_nullspace_conditions(seed, symmetric):
    sys_, _, _, _ = instance(seed, symmetric)
    assert nullspace_conditions(sys_) == (True, True)


def test_assembled_preconditioner_is_symmetric():
    sys_, G, P, _ = instance(3)
    Pm = assemble_block_2x2(G, sys_.B, sys_.C).toarray()
    assert np.array_equal(Pm, Pm.T)
    assert np.array_equal(Pm, P.matrix.toarray())
