"""Dense reference computations used to validate the production path.

Everything here works with explicit matrices: the factorization
``C = E F E^T``, the nullspace of ``N = [B E]``, the projected processes in
``(x, w)`` coordinates, the full-space processes on the assembled saddle
matrix, direct solves and the spectrum of the preconditioned matrix.  These
routines are meant for small problems (``n + m <= 400``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .factor import SingularMatrixError, factorize_lu, factorize_symmetric_indefinite
from .linops import as_storage
from .saddle import TOL_NEG, IndefiniteError

__all__ = [
    "SIZE_CAP",
    "RANK_TOL",
    "CDecomposition",
    "NullspaceBasis",
    "ProjectedTrace",
    "FullSpaceTrace",
    "SpectrumReport",
    "decompose_c",
    "nullspace_basis",
    "projected_lanczos",
    "projected_arnoldi",
    "full_space_lanczos",
    "full_space_arnoldi",
    "direct_solve",
    "preconditioned_spectrum",
    "nullspace_conditions",
    "reduced_solution",
    "reduced_min_eigenvalue",
    "projector_pg",
    "formal_iterates",
]

SIZE_CAP = 400
RANK_TOL = 1e-10
_ZERO_TOL = 1e-13


def _dense(M):
    if isinstance(M, np.ndarray):
        return np.atleast_2d(np.asarray(M, dtype=float))
    if hasattr(M, "to_dense"):
        return M.to_dense()
    return as_storage(M).toarray()


def _cap(size):
    if size > SIZE_CAP:
        raise ValueError(f"oracle routines are capped at n + m <= {SIZE_CAP}, got {size}")


def _norm_factor(sq, scale, what):
    if sq < -TOL_NEG * scale:
        raise IndefiniteError(f"{what}^2 = {sq:.3e} < 0")
    if sq <= _ZERO_TOL * scale:
        return 0.0
    return float(np.sqrt(sq))


@dataclass(frozen=True)
class CDecomposition:
    """``C = E diag(f) E^T`` with ``E`` having orthonormal columns."""

    E: np.ndarray
    f: np.ndarray

    @property
    def p(self):
        return self.f.size

    @property
    def F(self):
        return np.diag(self.f)

    @property
    def Finv(self):
        return np.diag(1.0 / self.f)


def decompose_c(C, rank_tol=RANK_TOL):
    """Eigen-decompose ``C`` and keep the eigenpairs above the rank tolerance."""
    c = _dense(C)
    if np.abs(c - c.T).max(initial=0.0) > 1e-14 * max(np.abs(c).max(initial=0.0), 1.0):
        raise ValueError("C must be symmetric")
    lam, V = np.linalg.eigh(c)
    scale = np.abs(lam).max(initial=0.0)
    keep = np.abs(lam) > rank_tol * scale if scale > 0 else np.zeros(lam.size, dtype=bool)
    return CDecomposition(V[:, keep], lam[keep])


@dataclass(frozen=True)
class NullspaceBasis:
    """Orthonormal basis ``Z = [Z1; Z2]`` of the nullspace of ``[B E]``."""

    Z: np.ndarray
    n: int

    @property
    def Z1(self):
        return self.Z[:self.n]

    @property
    def Z2(self):
        return self.Z[self.n:]


def nullspace_basis(B, cdec, rank_tol=RANK_TOL):
    """Nullspace of ``N = [B E]`` from a pivoted QR factorization of ``N^T``."""
    b = _dense(B)
    N = np.hstack([b, cdec.E])
    nz = N.shape[1]
    Q, R, _ = sla.qr(N.T, pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rank_tol * d.max(initial=0.0))) if d.size and d.max() > 0 else 0
    return NullspaceBasis(Q[:, rank:nz], b.shape[1])


def _proj_matrix(G, B, cdec):
    g = _dense(G)
    b = _dense(B)
    n, m, p = g.shape[0], b.shape[0], cdec.p
    K = np.zeros((n + p + m, n + p + m))
    K[:n, :n] = g
    K[n:n + p, n:n + p] = cdec.Finv
    K[:n, n + p:] = b.T
    K[n:n + p, n + p:] = cdec.E.T
    K[n + p:, :n] = b
    K[n + p:, n:n + p] = cdec.E
    return K


def _lu_solver(M, what):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.size == 0 or d.min() <= 1e-14 * d.max():
        raise SingularMatrixError(f"{what} is singular")
    return lambda r: sla.lu_solve((lu, piv), r, check_finite=False)


@dataclass
class ProjectedTrace:
    """Trace of a projected or full-space process.

    ``v1`` and ``v2`` hold the two blocks of the normalized basis vectors
    (``x`` and ``w`` parts for projected processes, ``x`` and ``y`` parts in
    the full space).  Lanczos traces fill ``alpha``/``beta``; Arnoldi traces
    fill ``h10`` and ``columns`` (same layout as the production trace).
    """

    v1: list
    v2: list
    alpha: list
    beta: list
    h10: float = 0.0
    columns: list = None

    def hessenberg(self):
        ncol = len(self.columns)
        H = np.zeros((ncol + 1, ncol))
        for j, (i0, h) in enumerate(self.columns, start=1):
            H[i0 - 1:j + 1, j - 1] = h
        return H

    def tridiagonal(self, k=None):
        k = len(self.alpha) if k is None else k
        T = np.diag(np.asarray(self.alpha[:k], dtype=float))
        off = np.asarray(self.beta[1:k], dtype=float)
        return T + np.diag(off, 1) + np.diag(off, -1)


FullSpaceTrace = ProjectedTrace


def _lanczos_generic(apply_M, solve, u0, v0, split, maxiter, metric):
    """Lanczos with an operator, a projection and an optional metric.

    ``solve(u, v)`` projects ``u``; ``v`` is the vector ``u`` came from
    (``None`` for the start).  When ``metric`` is given the normalizers are
    computed as ``w^T metric(w)``, otherwise by the shortcut ``w^T u``.
    """
    ubar = solve(u0, None)
    scale = np.linalg.norm(ubar) * np.linalg.norm(u0)
    beta = _norm_factor(ubar @ u0, scale, "beta_1")
    trace = ProjectedTrace([], [], [], [beta])
    if beta == 0.0:
        return trace
    v_prev, v = v0, ubar / beta
    trace.v1.append(split(v)[0])
    trace.v2.append(split(v)[1])
    for _ in range(maxiter):
        u = apply_M(v)
        alpha = float(v @ u)
        ubar = solve(u, v)
        v_new = ubar - alpha * v - beta * v_prev
        sq, scale = _squared_norm(v_new, u, ubar, metric)
        beta = _norm_factor(sq, scale, f"beta_{len(trace.beta) + 1}")
        trace.alpha.append(alpha)
        trace.beta.append(beta)
        if beta == 0.0:
            break
        v_prev, v = v, v_new / beta
        trace.v1.append(split(v)[0])
        trace.v2.append(split(v)[1])
    return trace


def _squared_norm(w, u, ubar, metric):
    if metric is None:
        return w @ u, np.linalg.norm(ubar) * np.linalg.norm(u)
    mw, mnorm = metric(w)
    return w @ mw, mnorm * (ubar @ ubar)


def _arnoldi_generic(apply_M, solve, u0, split, maxiter, mem, metric):
    ubar = solve(u0, None)
    scale = np.linalg.norm(ubar) * np.linalg.norm(u0)
    h10 = _norm_factor(ubar @ u0, scale, "h_1,0")
    trace = ProjectedTrace([], [], [], [], h10, [])
    if h10 == 0.0:
        return trace
    V = [ubar / h10]
    trace.v1.append(split(V[0])[0])
    trace.v2.append(split(V[0])[1])
    for k in range(1, maxiter + 1):
        u = apply_M(V[-1])
        ubar = solve(u, V[-1])
        i0 = 1 if mem is None else max(1, k - mem + 1)
        window = V[i0 - 1:k]
        if metric is None:
            h = np.array([vi @ u for vi in window])
            v_new = ubar - sum(hi * vi for hi, vi in zip(h, window))
        else:
            # two passes of modified Gram-Schmidt in the metric
            h = np.zeros(len(window))
            v_new = ubar.copy()
            for _ in range(2):
                for i, vi in enumerate(window):
                    hi = vi @ metric(v_new)[0]
                    h[i] += hi
                    v_new -= hi * vi
        sq, scale = _squared_norm(v_new, u, ubar, metric)
        hk = _norm_factor(sq, scale, f"h_{k + 1},{k}")
        trace.columns.append((i0, np.append(h, hk)))
        if hk == 0.0:
            break
        V.append(v_new / hk)
        trace.v1.append(split(V[-1])[0])
        trace.v2.append(split(V[-1])[1])
    return trace


def _projected_setup(sys, G, cdec, x0, w0, stabilized):
    n, p = sys.n, cdec.p
    _cap(n + p + sys.m)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    w0 = np.zeros(p) if w0 is None else np.asarray(w0, dtype=float)
    b = _dense(sys.B)
    N = np.hstack([b, cdec.E])
    if np.linalg.norm(N @ np.concatenate([x0, w0])) > 1e-10 * (
            np.linalg.norm(b) * np.linalg.norm(x0) + np.linalg.norm(w0)):
        raise ValueError("starting point must satisfy B x0 + E w0 = 0")
    a = _dense(sys.A)
    g = _dense(G)
    solve3 = _lu_solver(_proj_matrix(G, sys.B, cdec), "projection matrix")

    def apply_M(v):
        return np.concatenate([a @ v[:n], v[n:] / cdec.f])

    def solve(u, v):
        # with the third block N v the rounding error in N v_k is not amplified
        r3 = N @ v if (stabilized and v is not None) else np.zeros(sys.m)
        return solve3(np.concatenate([u, r3]))[:n + p]

    mnorm = np.linalg.norm(g) + np.linalg.norm(1.0 / cdec.f)

    def metric(v):
        return np.concatenate([g @ v[:n], v[n:] / cdec.f]), mnorm

    def split(v):
        return v[:n].copy(), v[n:].copy()

    u0 = np.concatenate([sys.b1 - a @ x0, -w0 / cdec.f])
    v0 = np.concatenate([np.zeros(n), -w0])
    return apply_M, solve, split, u0, v0, (metric if stabilized else None)


def projected_lanczos(sys, G, cdec, x0=None, w0=None, maxiter=20, stabilized=True):
    """Lanczos on the nullspace-projected system in ``(x, w)`` coordinates.

    Starts from ``v_0 = [0; -w0]`` and ``u_0 = [b - A x0; -F^{-1} w0]`` and
    computes each projection by a dense LU solve with the 3x3 block matrix.
    ``stabilized`` has the same meaning as for the production processes.
    """
    apply_M, solve, split, u0, v0, metric = _projected_setup(sys, G, cdec, x0, w0, stabilized)
    return _lanczos_generic(apply_M, solve, u0, v0, split, maxiter, metric)


def projected_arnoldi(sys, G, cdec, x0=None, w0=None, maxiter=20, mem=None, stabilized=True):
    apply_M, solve, split, u0, _, metric = _projected_setup(sys, G, cdec, x0, w0, stabilized)
    return _arnoldi_generic(apply_M, solve, u0, split, maxiter, mem, metric)


def _full_setup(sys, G, x0, y0, stabilized):
    n, m = sys.n, sys.m
    _cap(n + m)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    y0 = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float)
    b, c = _dense(sys.B), _dense(sys.C)
    if np.linalg.norm(b @ x0 - c @ y0) > 1e-10 * (np.linalg.norm(b) * np.linalg.norm(x0)
                                                   + np.linalg.norm(c) * np.linalg.norm(y0)):
        raise ValueError("starting point must satisfy B x0 - C y0 = 0")
    a = _dense(sys.A)
    K = np.block([[a, b.T], [b, -c]])
    P = np.block([[_dense(G), b.T], [b, -c]])
    solveP = _lu_solver(P, "constraint preconditioner")
    r0 = np.concatenate([sys.b1 - a @ x0 - b.T @ y0, np.zeros(m)])
    pnorm = np.linalg.norm(P)

    def split(v):
        return v[:n].copy(), v[n:].copy()

    def metric(v):
        return P @ v, pnorm

    return ((lambda v: K @ v), (lambda u, v: solveP(u)), split, r0, np.zeros(n + m),
            metric if stabilized else None)


def full_space_lanczos(sys, G, x0=None, y0=None, maxiter=20, stabilized=True):
    """Lanczos on the assembled saddle matrix with the constraint preconditioner."""
    apply_K, solveP, split, r0, v0, metric = _full_setup(sys, G, x0, y0, stabilized)
    return _lanczos_generic(apply_K, solveP, r0, v0, split, maxiter, metric)


def full_space_arnoldi(sys, G, x0=None, y0=None, maxiter=20, mem=None, stabilized=True):
    apply_K, solveP, split, r0, _, metric = _full_setup(sys, G, x0, y0, stabilized)
    return _arnoldi_generic(apply_K, solveP, r0, split, maxiter, mem, metric)


def direct_solve(sys):
    """Solve the saddle system densely; raises :class:`SingularMatrixError` if singular."""
    _cap(sys.n + sys.m)
    Km = sys.matrix()
    rhs = np.concatenate([sys.b1, sys.b2])
    if sys.A.symmetric:
        F = factorize_symmetric_indefinite(as_storage(Km, symmetric=True))
    else:
        F = factorize_lu(Km)
    if F.singular:
        raise SingularMatrixError("saddle-point matrix is singular")
    z = F.solve(rhs)
    return z[:sys.n], z[sys.n:]


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    count_near_one: int
    tol: float

    @property
    def max_imag(self):
        return float(np.abs(self.eigenvalues.imag).max(initial=0.0))


def preconditioned_spectrum(P_matrix, K_matrix, tol=1e-8):
    """Eigenvalues of ``P^{-1} K`` for matrices that differ only in a leading block.

    Writing ``K = P + D`` with ``D`` supported on the leading ``k x k``
    block gives ``P^{-1} K = I + P^{-1} D``, whose eigenvalues are one
    (with multiplicity ``size - k``) and ``1 + eig(S D_11)`` where ``S`` is
    the leading block of ``P^{-1}``.  Working with the ``k x k`` matrix
    avoids the Jordan blocks at one that make a plain dense eigensolve of
    ``P^{-1} K`` lose half of its digits there.
    """
    P = _dense(P_matrix)
    K = _dense(K_matrix)
    if P.shape != K.shape or P.shape[0] != P.shape[1]:
        raise ValueError("P and K must be square and of equal size")
    size = P.shape[0]
    _cap(size)
    D = K - P
    support = np.flatnonzero(np.any(D != 0, axis=0) | np.any(D != 0, axis=1))
    k = int(support.max()) + 1 if support.size else 0
    if k:
        solveP = _lu_solver(P, "preconditioner")
        S = solveP(np.eye(size)[:, :k])[:k]
        lam = 1.0 + np.linalg.eigvals(S @ D[:k, :k])
    else:
        lam = np.zeros(0, dtype=complex)
    eig = np.concatenate([lam.astype(complex), np.ones(size - k, dtype=complex)])
    count = int(np.sum(np.abs(eig - 1.0) <= tol))
    return SpectrumReport(eig, count, tol)


def nullspace_conditions(sys, tol=1e-12):
    """Return the two trivial-intersection conditions on the nullspaces.

    The first is ``Null(A) & Null(B) = {0}``, the second
    ``Null(B^T) & Null(C) = {0}``; both are rank tests on stacked blocks.
    """
    a, b, c = _dense(sys.A), _dense(sys.B), _dense(sys.C)
    r1 = np.linalg.matrix_rank(np.vstack([a, b]), tol=None if tol is None else
                               tol * max(np.abs(np.vstack([a, b])).max(), 1.0))
    r2 = np.linalg.matrix_rank(np.vstack([b.T, c]), tol=None if tol is None else
                               tol * max(np.abs(np.vstack([b.T, c])).max(), 1.0))
    return bool(r1 == sys.n), bool(r2 == sys.m)


def reduced_solution(sys, cdec, Z=None):
    """Primal part of the solution computed through the nullspace-reduced system."""
    Z = nullspace_basis(sys.B, cdec) if Z is None else Z
    n = sys.n
    N = np.hstack([_dense(sys.B), cdec.E])
    g0 = np.linalg.lstsq(N, sys.b2, rcond=None)[0]
    M = sla.block_diag(_dense(sys.A), cdec.Finv)
    rhs = np.concatenate([sys.b1, np.zeros(cdec.p)]) - M @ g0
    xhat = np.linalg.solve(Z.Z.T @ M @ Z.Z, Z.Z.T @ rhs)
    return (g0 + Z.Z @ xhat)[:n]


def reduced_min_eigenvalue(G, B, cdec, Z=None):
    """Smallest eigenvalue of ``Z^T blkdiag(G, F^{-1}) Z``."""
    Z = nullspace_basis(B, cdec) if Z is None else Z
    if Z.Z.shape[1] == 0:
        return np.inf
    M = sla.block_diag(_dense(G), cdec.Finv)
    return float(np.linalg.eigvalsh(Z.Z.T @ M @ Z.Z).min())


def projector_pg(G, B, cdec, Z=None):
    """``P_G = Z (Z^T blkdiag(G, F^{-1}) Z)^{-1} Z^T`` and ``blkdiag(G, F^{-1})``."""
    Z = nullspace_basis(B, cdec) if Z is None else Z
    M = sla.block_diag(_dense(G), cdec.Finv)
    PG = Z.Z @ np.linalg.solve(Z.Z.T @ M @ Z.Z, Z.Z.T)
    return PG, M


def formal_iterates(sys, G, method, x0=None, y0=None, maxiter=20, mem=None, stabilized=True):
    """Iterates of textbook Krylov methods run on the full saddle system.

    Builds the full-space basis and solves the small projected problem of
    each method densely: least squares for ``minres``, ``gmres`` and
    ``dqgmres`` (banded Hessenberg from a truncated basis), the tridiagonal
    system for ``cg`` and the minimum-norm problem for ``symmlq``.  Returns a
    list of ``(x_k, y_k)`` for ``k = 1, 2, ...``.
    """
    n, m = sys.n, sys.m
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    y0 = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float)
    z0 = np.concatenate([x0, y0])
    if method in ("minres", "cg", "symmlq"):
        tr = full_space_lanczos(sys, G, x0, y0, maxiter, stabilized)
        beta1 = tr.beta[0]
        nsteps = len(tr.alpha)
    elif method in ("gmres", "dqgmres"):
        tr = full_space_arnoldi(sys, G, x0, y0, maxiter, mem if method == "dqgmres" else None,
                                stabilized)
        beta1 = tr.h10
        nsteps = len(tr.columns)
    else:
        raise ValueError(f"unknown method {method!r}")
    V = np.array([np.concatenate([a, b]) for a, b in zip(tr.v1, tr.v2)]).T
    out = []
    for k in range(1, nsteps + 1):
        rhs = np.zeros(k + 1)
        rhs[0] = beta1
        if method in ("gmres", "dqgmres"):
            Hb = tr.hessenberg()[:k + 1, :k]
            c = np.linalg.lstsq(Hb, rhs, rcond=None)[0]
            z = z0 + V[:, :k] @ c
        else:
            T = tr.tridiagonal(k + 1) if k < len(tr.alpha) else _extended_t(tr, k)
            Tbar = T[:k + 1, :k]
            if method == "minres":
                c = np.linalg.lstsq(Tbar, rhs, rcond=None)[0]
                z = z0 + V[:, :k] @ c
            elif method == "cg":
                c = np.linalg.solve(Tbar[:k], rhs[:k])
                z = z0 + V[:, :k] @ c
            else:
                c = np.linalg.lstsq(Tbar.T, rhs[:k], rcond=None)[0]
                Vk = V[:, :k + 1] if V.shape[1] > k else np.hstack([V, np.zeros((n + m, 1))])
                z = z0 + Vk @ c
        out.append((z[:n], z[n:]))
    return out


def _extended_t(tr, k):
    # (k+1) x (k+1) matrix whose leading (k+1) x k part is T_bar_k
    T = np.zeros((k + 1, k + 1))
    T[:k, :k] = tr.tridiagonal(k)
    T[k, k - 1] = tr.beta[k]
    T[k - 1, k] = tr.beta[k]
    return T
