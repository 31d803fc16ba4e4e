import os
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rel
from saddlekrylov.factor import SingularMatrixError
from saddlekrylov.linops import as_storage, read_matrix_market, read_vector
from saddlekrylov.oracle import decompose_c, direct_solve, nullspace_conditions
from saddlekrylov.problems import (FORMULATIONS, GenerationError, IPState, ToyQP,
                                   adaptive_atol, counterexample_system, formulate,
                                   gen_random_system, initial_state, kkt_residual, newton_step,
                                   random_toy_qp, toy_ip_solve, toy_qp_set, write_bundle)
from saddlekrylov.saddle import build_constraint_preconditioner, check_assumption_2_1


def test_generator_deterministic():
    a, Ga = gen_random_system(20, 5, 42, C_rank=2, A_symmetric=False, b2=True)
    b, Gb = gen_random_system(20, 5, 42, C_rank=2, A_symmetric=False, b2=True)
    for u, v in ((a.A.to_dense(), b.A.to_dense()), (a.B.toarray(), b.B.toarray()),
                 (a.C.toarray(), b.C.toarray()), (Ga.toarray(), Gb.toarray()),
                 (a.b1, b.b1), (a.b2, b.b2)):
        assert np.array_equal(u, v)


@pytest.mark.parametrize("p", [0, 1, 3, 6])
def test_generator_rank(p):
    sys_, _ = gen_random_system(25, 6, p, C_rank=p)
    assert decompose_c(sys_.C).p == p
    assert np.linalg.eigvalsh(sys_.C.toarray()).min() >= -1e-12


def test_generator_indefinite_C():
    sys_, _ = gen_random_system(25, 6, 3, C_rank=4, C_psd=False)
    lam = np.linalg.eigvalsh(sys_.C.toarray())
    assert lam.min() < -0.1 and lam.max() > 0.1


@pytest.mark.parametrize("ok", [True, False])
def test_generator_assumption_flag(ok):
    sys_, G = gen_random_system(20, 5, 7, assumption_ok=ok)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        P = build_constraint_preconditioner(G, sys_.B, sys_.C)
    assert check_assumption_2_1(P).holds == ok


def test_generator_argument_checks():
    with pytest.raises(ValueError):
        gen_random_system(10, 0, 0)
    with pytest.raises(ValueError):
        gen_random_system(10, 3, 0, C_rank=4)


def test_generator_gives_up():
    # a 1 x 1 block A with one constraint and C = 0 cannot be well conditioned
    # after the leading block is forced negative; the retry budget runs out
    with pytest.raises(GenerationError):
        gen_random_system(1, 1, 0, C_rank=0, assumption_ok=False, max_tries=3)


def test_counterexample():
    s = counterexample_system()
    assert nullspace_conditions(s) == (True, True)
    assert np.all(s.matrix().toarray()[1] == 0.0)
    assert np.array_equal(s.b1, np.ones(3))
    with pytest.raises(SingularMatrixError):
        direct_solve(s)


def test_toy_qp_validation():
    qp = random_toy_qp(4, 2, 0)
    with pytest.raises(ValueError):
        ToyQP(qp.H, qp.c, qp.Bq, qp.b, qp.u, qp.l, qp.D1, qp.D2)
    with pytest.raises(ValueError):
        ToyQP(qp.H, qp.c, qp.Bq, qp.b, qp.l, qp.u, 0 * qp.D1, qp.D2)
    with pytest.raises(ValueError):
        random_toy_qp(1, 1, 0)


def test_toy_qp_set():
    a = toy_qp_set(6, seed=3)
    b = toy_qp_set(6, seed=3)
    assert [q.name for q in a] == [q.name for q in b]
    for qa, qb in zip(a, b):
        assert np.array_equal(qa.hessian(), qb.hessian())
        assert 10 <= qa.nq <= 40 and 1 <= qa.mq <= min(10, qa.nq // 3)
        H = qa.hessian()
        assert np.abs(H - np.diag(np.diag(H))).max() > 0
    assert toy_qp_set(0) == []


def test_state_check():
    qp = random_toy_qp(4, 2, 0)
    st0 = initial_state(qp)
    st0.check(qp)
    st0.x = qp.u.copy()
    with pytest.raises(ValueError):
        st0.check(qp)
    with pytest.raises(ValueError):
        formulate(qp, st0, "K2")


def _interior_state(qp, seed):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.05, 0.95, qp.nq)
    x = qp.l + t * (qp.u - qp.l)
    return IPState(x, rng.standard_normal(qp.mq), rng.uniform(0.01, 3, qp.nq),
                   rng.uniform(0.01, 3, qp.nq), 0.1)


@pytest.mark.parametrize("seed", range(4))
def test_formulation_shapes_and_symmetry(seed):
    qp = random_toy_qp(6 + seed, 2 + seed % 2, seed)
    st0 = _interior_state(qp, seed)
    n, m = qp.nq, qp.mq
    k2, _ = formulate(qp, st0, "K2")
    k35, _ = formulate(qp, st0, "K35")
    k3p, _ = formulate(qp, st0, "K3p")
    assert (k2.n, k2.m) == (n, m)
    assert (k35.n, k35.m) == (n, m + 2 * n)
    assert (k3p.n, k3p.m) == (3 * n, m)
    assert k2.A.symmetric and k35.A.symmetric and not k3p.A.symmetric
    K35 = k35.matrix().toarray()
    assert np.array_equal(K35, K35.T)
    K3p = k3p.matrix().toarray()
    assert not np.allclose(K3p, K3p.T)
    with pytest.raises(ValueError):
        formulate(qp, st0, "K4")


def _newton_residuals(qp, st0, step):
    dx, dy, dz1, dz2 = step
    x1, x2 = st0.slacks(qp)
    H = qp.hessian()
    rd = qp.c + H @ st0.x + qp.D1 ** 2 * st0.x - qp.Bq.T @ st0.y - st0.z1 + st0.z2
    rp = qp.b - qp.Bq @ st0.x - qp.D2 ** 2 * st0.y
    return [H @ dx + qp.D1 ** 2 * dx - qp.Bq.T @ dy - dz1 + dz2 + rd,
            qp.Bq @ dx + qp.D2 ** 2 * dy - rp,
            st0.z1 * dx + x1 * dz1 - (st0.mu - x1 * st0.z1),
            -st0.z2 * dx + x2 * dz2 - (st0.mu - x2 * st0.z2)]


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_formulations_give_the_same_newton_step(nq, mq, seed):
    qp = random_toy_qp(nq, mq, seed)
    st0 = _interior_state(qp, seed)
    steps = {}
    for kind in FORMULATIONS:
        sys_, _ = formulate(qp, st0, kind)
        steps[kind] = newton_step(qp, st0, kind, direct_solve(sys_))
        for r in _newton_residuals(qp, st0, steps[kind]):
            assert np.linalg.norm(r) <= 1e-8 * max(1.0, np.linalg.norm(np.concatenate(steps[kind])))
    for kind in ("K35", "K3p"):
        for a, b in zip(steps[kind], steps["K2"]):
            assert np.linalg.norm(a - b) <= 1e-8 * max(1.0, np.linalg.norm(b))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_k2_leading_block_positive_definite(nq, mq, seed):
    qp = random_toy_qp(nq, mq, seed)
    sys_, G = formulate(qp, _interior_state(qp, seed), "K2")
    assert np.linalg.eigvalsh(sys_.A.to_dense()).min() > 0
    assert np.all(G.diagonal() > 0)


@pytest.mark.parametrize("kind", FORMULATIONS)
def test_diagonal_G(kind):
    qp = random_toy_qp(5, 2, 1)
    sys_, G = formulate(qp, initial_state(qp), kind)
    assert np.array_equal(G.toarray(), np.diag(np.diag(sys_.A.to_dense())))


def test_adaptive_atol():
    assert adaptive_atol(10.0) == 1e-2
    assert adaptive_atol(1.0) == 1e-2
    assert adaptive_atol(1e-3) == pytest.approx(1e-5, rel=1e-15)
    assert adaptive_atol(1e-6) == 1e-6
    assert adaptive_atol(1e-12) == 1e-6


def two_variable_qp():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    return ToyQP(as_storage(H, symmetric=True), np.array([-6.0, 1.0]), np.array([[1.0, 1.0]]),
                 np.array([1.0]), np.array([-1.0, -1.0]), np.array([1.0, 1.0]),
                 np.full(2, 1e-2), np.full(1, 1e-2), name="two")


def two_variable_optimum():
    # the first upper bound is active; the free coordinate solves a 1 x 1 system
    qp = two_variable_qp()
    Q = qp.hessian() + np.diag(qp.D1 ** 2) + qp.Bq.T @ qp.Bq / qp.D2[0] ** 2
    g = qp.c - qp.Bq.T @ qp.b / qp.D2[0] ** 2
    x = np.array([1.0, 0.0])
    x[1] = -(g[1] + Q[1, 0] * x[0]) / Q[1, 1]
    z2 = -(g + Q @ x)[0]
    assert z2 > 0 and -1 < x[1] < 1  # the guessed active set is optimal
    return x


@pytest.mark.parametrize("kind", ["K2", "K35"])
def test_two_variable_qp(kind):
    qp = two_variable_qp()
    rep = toy_ip_solve(qp, kind, "minres")
    assert rep.converged and rep.kkt_residual <= 1e-6
    assert np.abs(rep.state.x - two_variable_optimum()).max() <= 1e-6


def test_eps_sequence_follows_formula():
    qp = toy_qp_set(1, seed=4)[0]
    rep = toy_ip_solve(qp, "K2", "minres")
    assert rep.converged
    assert rep.eps_a == [max(min(1e-2 * mu, 1e-2), 1e-6) for mu in rep.mu]
    assert len(rep.inner_it) == rep.outer_it and sum(rep.inner_it) == rep.inner_it_total


def test_kkt_residual_of_initial_state():
    qp = random_toy_qp(5, 2, 0)
    st0 = initial_state(qp)
    assert kkt_residual(qp, st0) >= st0.mu


def test_toy_ip_unknown_kind():
    qp = random_toy_qp(5, 2, 0)
    with pytest.raises(ValueError):
        toy_ip_solve(qp, "K9")


def test_write_bundle(tmp_path):
    sys_, G = gen_random_system(8, 3, 1, b2=True)
    paths = write_bundle(tmp_path, sys_, G, comment="test")
    assert sorted(os.listdir(tmp_path)) == ["A.mtx", "B.mtx", "C.mtx", "G.mtx", "b1.mtx", "b2.mtx"]
    assert np.array_equal(read_matrix_market(paths["A"]).toarray(), sys_.A.to_dense())
    assert np.array_equal(read_vector(paths["b2"]), sys_.b2)
    assert read_matrix_market(paths["C"]).is_symmetric
