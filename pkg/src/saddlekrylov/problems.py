"""Test problems: random regularized systems, a singular counterexample and a toy interior-point method."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .factor import SingularMatrixError
from .linops import LinearOperator, as_storage, write_matrix_market, write_vector
from .oracle import direct_solve
from .solvers import SolverOptions, reg_cpkrylov
from .saddle import (AssumptionWarning, RegularizedSaddleSystem, build_constraint_preconditioner,
                     check_assumption_2_1)

__all__ = [
    "GenerationError",
    "gen_random_system",
    "counterexample_system",
    "ToyQP",
    "IPState",
    "random_toy_qp",
    "toy_qp_set",
    "initial_state",
    "kkt_residual",
    "formulate",
    "newton_step",
    "adaptive_atol",
    "toy_ip_solve",
    "IPReport",
    "write_bundle",
    "FORMULATIONS",
]


class GenerationError(RuntimeError):
    """No acceptable instance was found within the retry budget."""


def _dense_operator(a, symmetric):
    return LinearOperator(a.shape[0], a.shape[1], lambda v: a @ v, lambda v: a.T @ v,
                          symmetric, as_storage(a, symmetric=symmetric))


def _orthonormal(rng, m, p):
    if p == 0:
        return np.zeros((m, 0))
    q, _ = np.linalg.qr(rng.standard_normal((m, p)))
    return q


def gen_random_system(n, m, seed, C_rank=None, C_psd=True, A_symmetric=True,
                      assumption_ok=True, b2=False, spectrum=(0.1, 3.0), max_tries=20):
    """Seeded random system ``(sys, G)``.

    ``C = E diag(f) E^T`` has rank ``C_rank`` (default ``m // 2``) and is
    positive semidefinite unless ``C_psd`` is false, in which case ``f``
    contains negative entries.  ``G = s D`` is diagonal, with the factor
    ``s`` doubled until the nullspace positivity condition holds (or fails,
    when ``assumption_ok`` is false and ``G`` is negated).  The symmetric
    part of ``A`` is ``s D^{1/2} Q diag(lam) Q^T D^{1/2}`` with ``lam``
    evenly spaced over ``spectrum``; a skew part is added when
    ``A_symmetric`` is false.  The saddle matrix is checked to be
    nonsingular and reasonably conditioned.
    """
    if m < 1 or n < 1:
        raise ValueError("n and m must be positive")
    p = m // 2 if C_rank is None else int(C_rank)
    if not 0 <= p <= m:
        raise ValueError("C_rank must lie in [0, m]")
    lo, hi = spectrum
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        B = rng.standard_normal((m, n))
        E = _orthonormal(rng, m, p)
        f = rng.uniform(0.5, 2.0, p)
        if not C_psd and p:
            f[: max(1, p // 2)] *= -1.0
        C = (E * f) @ E.T
        C = (C + C.T) / 2
        d = rng.uniform(1.0, 2.0, n)
        sign = 1.0 if assumption_ok else -1.0
        scale = 1.0
        ok = False
        for _ in range(40):
            G = np.diag(sign * scale * d)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", AssumptionWarning)
                    P = build_constraint_preconditioner(G, B, C)
            except SingularMatrixError:
                break
            if check_assumption_2_1(P).holds == assumption_ok:
                ok = True
                break
            if not assumption_ok:
                break
            scale *= 2.0
        if not ok:
            continue
        Q = _orthonormal(rng, n, n)
        root = np.sqrt(scale * d)
        A = sign * root[:, None] * ((Q * np.linspace(lo, hi, n)) @ Q.T) * root[None, :]
        A = (A + A.T) / 2
        if not A_symmetric:
            R = rng.standard_normal((n, n))
            R = R - R.T
            A = A + 0.3 * scale * d.min() * R / max(np.linalg.norm(R, 2), 1e-300)
        b1 = rng.standard_normal(n)
        rhs2 = rng.standard_normal(m) if b2 else None
        sys = RegularizedSaddleSystem(_dense_operator(A, A_symmetric), B,
                                      as_storage(C, symmetric=True), b1, rhs2)
        try:
            direct_solve(sys)
        except SingularMatrixError:
            continue
        if np.linalg.cond(sys.matrix().toarray()) > 1e10:
            continue
        return sys, as_storage(G, symmetric=True)
    raise GenerationError(f"no acceptable instance for n={n}, m={m}, seed={seed}")


def counterexample_system():
    """System whose blocks satisfy both nullspace conditions yet whose matrix is singular."""
    A = np.array([[1.0, -1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 1.0]])
    B = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    C = np.eye(2)
    return RegularizedSaddleSystem(_dense_operator(A, False), B, as_storage(C, symmetric=True),
                                   np.ones(3), np.ones(2))


# -- toy interior-point method --------------------------------------------------

FORMULATIONS = ("K2", "K35", "K3p")
STEP_FRACTION = 0.995
SIGMA = 0.1
MU_FLOOR = 1e-3  # mu never drops below MU_FLOOR * tol, keeping the iterates interior


@dataclass(frozen=True)
class ToyQP:
    """``min c^T x + x^T H x / 2 + |D1 x|^2 / 2 + |r|^2 / 2`` s.t. ``Bq x + D2 r = b``, ``l <= x <= u``.

    ``D1`` and ``D2`` are stored as vectors of positive diagonal entries.
    """

    H: object
    c: np.ndarray
    Bq: np.ndarray
    b: np.ndarray
    l: np.ndarray
    u: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    name: str = "qp"

    def __post_init__(self):
        if np.any(self.l >= self.u):
            raise ValueError("bounds must satisfy l < u")
        if np.any(self.D1 <= 0) or np.any(self.D2 <= 0):
            raise ValueError("regularization entries must be positive")

    @property
    def nq(self):
        return self.c.size

    @property
    def mq(self):
        return self.b.size

    def hessian(self):
        return as_storage(self.H).toarray()


@dataclass
class IPState:
    """Primal point ``x``, bound multipliers ``z1``, ``z2``, multipliers ``y`` and ``mu``."""

    x: np.ndarray
    y: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    mu: float

    def slacks(self, qp):
        return self.x - qp.l, qp.u - self.x

    def check(self, qp):
        x1, x2 = self.slacks(qp)
        if min(x1.min(), x2.min(), self.z1.min(), self.z2.min()) <= 0 or self.mu <= 0:
            raise ValueError("interior-point state is not strictly interior")


def random_toy_qp(nq, mq, seed, reg=1e-2):
    """Seeded bound-constrained convex QP with a dense, non-diagonal ``H``."""
    if not (nq >= 2 and mq >= 1):
        raise ValueError("need nq >= 2 and mq >= 1")
    rng = np.random.default_rng(seed)
    L = rng.standard_normal((nq, nq))
    H = L @ L.T / nq
    c = rng.standard_normal(nq)
    Bq = rng.standard_normal((mq, nq))
    l = -1.0 - rng.uniform(0.0, 1.0, nq)
    u = 1.0 + rng.uniform(0.0, 1.0, nq)
    xf = rng.uniform(0.5, 1.0, nq) * np.where(rng.random(nq) < 0.5, l, u)
    return ToyQP(as_storage((H + H.T) / 2, symmetric=True), c, Bq, Bq @ xf, l, u,
                 np.full(nq, reg), np.full(mq, reg), name=f"toy{seed}_{nq}x{mq}")


def toy_qp_set(count, seed=0):
    """``count`` seeded QPs with ``nq`` in ``[10, 40]`` and ``mq <= min(10, nq // 3)``."""
    out = []
    for k in range(count):
        rng = np.random.default_rng(seed + k)
        nq = int(rng.integers(10, 41))
        mq = int(rng.integers(1, min(10, nq // 3) + 1))
        out.append(random_toy_qp(nq, mq, seed + k))
    return out


def initial_state(qp):
    x = (qp.l + qp.u) / 2
    z1 = np.ones(qp.nq)
    z2 = np.ones(qp.nq)
    x1, x2 = x - qp.l, qp.u - x
    mu = float(x1 @ z1 + x2 @ z2) / (2 * qp.nq)
    return IPState(x, np.zeros(qp.mq), z1, z2, mu)


def _residuals(qp, st, mu):
    x1, x2 = st.slacks(qp)
    rd = qp.c + qp.hessian() @ st.x + qp.D1 ** 2 * st.x - qp.Bq.T @ st.y - st.z1 + st.z2
    rp = qp.b - qp.Bq @ st.x - qp.D2 ** 2 * st.y
    rc1 = mu - x1 * st.z1
    rc2 = mu - x2 * st.z2
    return rd, rp, rc1, rc2


def kkt_residual(qp, st):
    """Scaled KKT residual: the largest of dual, primal and complementarity parts.

    The dual and primal infinity norms are divided by ``1 + |c|_inf`` and
    ``1 + |b|_inf``; complementarity is the average of ``x_i z_i``.
    """
    rd, rp, _, _ = _residuals(qp, st, 0.0)
    x1, x2 = st.slacks(qp)
    comp = float(x1 @ st.z1 + x2 @ st.z2) / (2 * qp.nq)
    return max(np.abs(rd).max() / (1 + np.abs(qp.c).max()),
               np.abs(rp).max() / (1 + np.abs(qp.b).max()), comp)


def formulate(qp, st, kind):
    """Newton system of the perturbed KKT conditions as ``(sys, G)``.

    ``K2`` eliminates the bound multipliers, ``K35`` keeps them through the
    symmetric blocks ``Z^{1/2}`` and ``-X`` and ``K3p`` keeps them in the
    nonsymmetric leading block ``[[H + D1^2, J^T], [-Z J, X]]``, with
    ``J = [I; -I]`` stacking both bounds.  ``G`` is the diagonal of the
    leading block in every case.
    """
    st.check(qp)
    rd, rp, rc1, rc2 = _residuals(qp, st, st.mu)
    x1, x2 = st.slacks(qp)
    H = qp.hessian()
    n, m = qp.nq, qp.mq
    Hd = H + np.diag(qp.D1 ** 2)
    J = np.vstack([np.eye(n), -np.eye(n)])
    X = np.concatenate([x1, x2])
    Z = np.concatenate([st.z1, st.z2])
    rc = np.concatenate([rc1, rc2])
    if kind == "K2":
        A = Hd + np.diag(st.z1 / x1 + st.z2 / x2)
        sys = RegularizedSaddleSystem(_dense_operator(A, True), qp.Bq,
                                      as_storage(np.diag(qp.D2 ** 2), symmetric=True),
                                      -rd + rc1 / x1 - rc2 / x2, rp)
    elif kind == "K35":
        A = Hd
        B = np.vstack([qp.Bq, np.sqrt(Z)[:, None] * J])
        C = np.diag(np.concatenate([qp.D2 ** 2, X]))
        sys = RegularizedSaddleSystem(_dense_operator(A, True), B, as_storage(C, symmetric=True),
                                      -rd, np.concatenate([rp, rc / np.sqrt(Z)]))
    elif kind == "K3p":
        A = np.block([[Hd, J.T], [-Z[:, None] * J, np.diag(X)]])
        B = np.hstack([qp.Bq, np.zeros((m, 2 * n))])
        sys = RegularizedSaddleSystem(_dense_operator(A, False), B,
                                      as_storage(np.diag(qp.D2 ** 2), symmetric=True),
                                      np.concatenate([-rd, -rc]), rp)
    else:
        raise ValueError(f"unknown formulation {kind!r}; choose from {', '.join(FORMULATIONS)}")
    return sys, as_storage(np.diag(np.diag(A)), symmetric=True)


def newton_step(qp, st, kind, solution):
    """Recover ``(dx, dy, dz1, dz2)`` from a solution ``(xs, ys)`` of :func:`formulate`.

    ``dx`` and ``dy`` are read off the solution.  The bound multiplier steps
    are rebuilt from the linearized complementarity equations and then
    corrected by the barrier share ``(z1/x1 + z2/x2) / G_ii`` of the
    stationarity gap of each coordinate, where ``G_ii`` is the diagonal of
    the ``K2`` leading block.  Near an active bound that share tends to one
    and the gap moves into complementarity, where it is multiplied by the
    small slack; away from the bounds it stays in the dual residual.  The
    ``[P]``-seminorm stopping test discounts residual components along
    active bounds, so without the correction they would linger in the
    dual residual.  With an exact solve the gap is zero and all
    formulations give the same step.
    """
    x1, x2 = st.slacks(qp)
    rd, _, rc1, rc2 = _residuals(qp, st, st.mu)
    xs, ys = solution
    n, m = qp.nq, qp.mq
    if kind not in FORMULATIONS:
        raise ValueError(f"unknown formulation {kind!r}; choose from {', '.join(FORMULATIONS)}")
    dx = xs[:n]
    dy = -ys[:m]
    dz1 = (rc1 - st.z1 * dx) / x1
    dz2 = (rc2 + st.z2 * dx) / x2
    # the stationarity row reads -dz1 + dz2 = t
    t = -rd - qp.hessian() @ dx - qp.D1 ** 2 * dx + qp.Bq.T @ dy
    gap = t - (dz2 - dz1)
    w1, w2 = st.z1 / x1, st.z2 / x2
    g = np.diag(qp.hessian()) + qp.D1 ** 2 + w1 + w2
    dz1 -= gap * w1 / g
    dz2 += gap * w2 / g
    return dx, dy, dz1, dz2


def adaptive_atol(mu):
    """Inner absolute tolerance ``max(min(1e-2 mu, 1e-2), 1e-6)``."""
    return max(min(1e-2 * mu, 1e-2), 1e-6)


def _step_to_boundary(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, STEP_FRACTION * float(np.min(-v[neg] / dv[neg])))


@dataclass
class IPReport:
    outer_it: int
    inner_it_total: int
    kkt_residual: float
    converged: bool
    state: IPState
    eps_a: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    inner_it: list = field(default_factory=list)
    inner_status: list = field(default_factory=list)
    message: str = ""


def toy_ip_solve(qp, kind="K2", method="minres", opts=None, max_outer=50, tol=1e-6):
    """Primal-dual path following with CP-Krylov Newton solves.

    Each Newton system is solved by ``reg_cpkrylov`` with ``rtol = 0`` and
    ``atol = adaptive_atol(mu)``.  The barrier parameter is ``SIGMA`` times
    the average complementarity (but at least ``MU_FLOOR * tol``).  Primal and dual variables take a common
    step, ``STEP_FRACTION`` of the distance to the boundary, so the
    residuals of the linear equations shrink by exactly ``1 - alpha``.
    """
    opts = SolverOptions() if opts is None else opts
    st = initial_state(qp)
    report = IPReport(0, 0, kkt_residual(qp, st), False, st)
    for it in range(1, max_outer + 1):
        if report.kkt_residual <= tol:
            report.converged = True
            break
        x1, x2 = st.slacks(qp)
        st.mu = max(SIGMA * float(x1 @ st.z1 + x2 @ st.z2) / (2 * qp.nq), MU_FLOOR * tol)
        eps = adaptive_atol(st.mu)
        sys, G = formulate(qp, st, kind)
        try:
            res = reg_cpkrylov(sys, G, method, opts.replace(atol=eps, rtol=0.0))
        except SingularMatrixError as exc:
            report.message = f"outer iteration {it}: {exc}"
            break
        dx, dy, dz1, dz2 = newton_step(qp, st, kind, (res.x, res.y))
        alpha = min(_step_to_boundary(x1, dx), _step_to_boundary(x2, -dx),
                    _step_to_boundary(st.z1, dz1), _step_to_boundary(st.z2, dz2))
        if alpha == 0.0:
            report.message = "zero step length"
            break
        st.x = st.x + alpha * dx
        st.y = st.y + alpha * dy
        st.z1 = st.z1 + alpha * dz1
        st.z2 = st.z2 + alpha * dz2
        report.outer_it = it
        report.inner_it_total += res.iterations
        report.inner_it.append(res.iterations)
        report.inner_status.append(res.status)
        report.eps_a.append(eps)
        report.mu.append(st.mu)
        report.kkt_residual = kkt_residual(qp, st)
    else:
        report.converged = report.kkt_residual <= tol
        if not report.converged:
            report.message = f"no convergence in {max_outer} outer iterations"
    return report


def write_bundle(directory, sys, G, comment=None):
    """Write ``A``, ``B``, ``C``, ``G``, ``b1`` and ``b2`` as Matrix Market files."""
    os.makedirs(directory, exist_ok=True)
    A = sys.A.matrix if sys.A.matrix is not None else as_storage(sys.A.to_dense())
    paths = {}
    for name, mat in (("A", A), ("B", sys.B), ("C", sys.C), ("G", G)):
        paths[name] = os.path.join(directory, f"{name}.mtx")
        write_matrix_market(paths[name], mat, comment=comment)
    for name, vec in (("b1", sys.b1), ("b2", sys.b2)):
        paths[name] = os.path.join(directory, f"{name}.mtx")
        write_vector(paths[name], vec, comment=comment)
    return paths
