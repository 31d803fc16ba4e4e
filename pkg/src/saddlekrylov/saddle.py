"""Regularized saddle-point systems and constraint preconditioners.

The system is ``[[A, B^T], [B, -C]] [x; y] = [b1; b2]`` and the constraint
preconditioner keeps ``B`` and ``C`` but replaces ``A`` by a symmetric ``G``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .factor import SingularMatrixError, factorize_symmetric_indefinite, inertia_of, refine_solve
from .linops import DimensionError, LinearOperator, as_storage, aslinearoperator, assemble_block_2x2

__all__ = [
    "AssumptionError",
    "IndefiniteError",
    "AssumptionWarning",
    "RegularizedSaddleSystem",
    "ConstraintPreconditioner",
    "AssumptionReport",
    "build_constraint_preconditioner",
    "check_assumption_2_1",
    "check_cg_applicability",
    "apply_cp",
    "project_step",
    "p_seminorm",
    "TOL_NEG",
]

TOL_NEG = 1e-10


class AssumptionError(ValueError):
    """The preconditioner is not positive definite on the constraint nullspace."""


class AssumptionWarning(UserWarning):
    pass


class IndefiniteError(ArithmeticError):
    """A quadratic form that must be nonnegative came out negative."""


@dataclass(frozen=True, eq=False)
class RegularizedSaddleSystem:
    """``[[A, B^T], [B, -C]] [x; y] = [b1; b2]`` with ``A`` possibly nonsymmetric."""

    A: LinearOperator
    B: object
    C: object
    b1: np.ndarray
    b2: np.ndarray

    def __init__(self, A, B, C, b1, b2=None):
        A = aslinearoperator(A)
        B = as_storage(B)
        C = as_storage(C)
        n, m = A.cols, B.rows
        if A.rows != n:
            raise DimensionError("A must be square")
        if B.cols != n:
            raise DimensionError(f"B has {B.cols} columns but A is {n}x{n}")
        if C.shape != (m, m):
            raise DimensionError(f"C must be {m}x{m}")
        if m == 0:
            raise DimensionError("the system needs at least one constraint row")
        if not C.is_symmetric:
            c = C.toarray()
            if np.abs(c - c.T).max(initial=0.0) > 1e-14 * max(np.abs(c).max(initial=0.0), 1.0):
                raise ValueError("C must be symmetric")
            C = as_storage(c, symmetric=True) if C.layout == "dense" else as_storage(C, symmetric=True)
        b1 = np.array(b1, dtype=float).ravel()
        b2 = np.zeros(m) if b2 is None else np.array(b2, dtype=float).ravel()
        if b1.shape != (n,) or b2.shape != (m,):
            raise DimensionError("right-hand side lengths do not match the blocks")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "b2", b2)

    @property
    def n(self):
        return self.A.cols

    @property
    def m(self):
        return self.B.rows

    def with_rhs(self, b1, b2=None):
        return RegularizedSaddleSystem(self.A, self.B, self.C, b1, b2)

    def matvec(self, x, y):
        """Blockwise product ``(A x + B^T y, B x - C y)``."""
        return (self.A.apply(x) + self.B.rmatvec(y), self.B.matvec(x) - self.C.matvec(y))

    def residual(self, x, y):
        r1, r2 = self.matvec(x, y)
        return self.b1 - r1, self.b2 - r2

    def relative_residual(self, x, y):
        r1, r2 = self.residual(x, y)
        bn = np.hypot(np.linalg.norm(self.b1), np.linalg.norm(self.b2))
        rn = np.hypot(np.linalg.norm(r1), np.linalg.norm(r2))
        return rn / bn if bn > 0 else rn

    def matrix(self):
        """The assembled ``K`` (needs an explicit ``A``)."""
        A = self.A.matrix if self.A.matrix is not None else as_storage(self.A.to_dense())
        return assemble_block_2x2(A, self.B, self.C)


class ConstraintPreconditioner:
    """Factorized ``P = [[G, B^T], [B, -C]]``.

    Holds the refinement policy and, for semi-refinement, the multiplier
    segment of the most recent projection (``zbar_prev``).  That memory is
    the only mutable state; solvers call :meth:`reset` when they start.
    """

    def __init__(self, G, B, C, factor, matrix, refine_tol=1e-10, refine_max=2,
                 semi_refine=False, strict=False):
        self.G = G
        self.B = B
        self.C = C
        self.factor = factor
        self.matrix = matrix
        self.refine_tol = refine_tol
        self.refine_max = refine_max
        self.semi_refine = semi_refine
        self.strict = strict
        self.n = G.rows
        self.m = B.rows
        self.zbar_prev = np.zeros(self.m)
        self.refine_steps = 0

    @property
    def inertia(self):
        return self.factor.inertia

    def reset(self):
        self.zbar_prev = np.zeros(self.m)
        self.refine_steps = 0

    def apply(self, r1, r2):
        return apply_cp(self, r1, r2)

    def project(self, u, t):
        return project_step(self, u, t)

    def seminorm(self, rx):
        return p_seminorm(self, rx)

    def __repr__(self):
        return (f"ConstraintPreconditioner(n={self.n}, m={self.m}, inertia={self.inertia}, "
                f"semi_refine={self.semi_refine})")


def build_constraint_preconditioner(G, B, C, refine_tol=1e-10, refine_max=2,
                                    semi_refine=False, strict=False):
    """Assemble and factorize ``[[G, B^T], [B, -C]]``.

    Raises :class:`SingularMatrixError` if the matrix is singular.  When the
    nullspace positivity condition fails a warning is issued, or an
    :class:`AssumptionError` is raised under ``strict``.
    """
    G = as_storage(G, symmetric=True)
    B = as_storage(B)
    C = as_storage(C, symmetric=True)
    n, m = G.rows, B.rows
    if G.cols != n or B.cols != n:
        raise DimensionError(f"G is {G.rows}x{G.cols} but B has {B.cols} columns")
    if C.shape != (m, m):
        raise DimensionError(f"C must be {m}x{m}")
    Pm = assemble_block_2x2(G, B, C)
    F = factorize_symmetric_indefinite(Pm)
    if F.singular:
        raise SingularMatrixError(f"constraint preconditioner is singular (inertia {F.inertia})")
    P = ConstraintPreconditioner(G, B, C, F, Pm, refine_tol, refine_max, semi_refine, strict)
    report = check_assumption_2_1(P)
    if not report.holds:
        msg = (f"G is not positive definite on the constraint nullspace: "
               f"neg(P)={report.neg_P}, neg(C)={report.neg_C}, m={report.m}")
        if strict:
            raise AssumptionError(msg)
        warnings.warn(msg, AssumptionWarning, stacklevel=2)
    return P


@dataclass(frozen=True)
class AssumptionReport:
    holds: bool
    neg_P: int
    neg_C: int
    m: int


def check_assumption_2_1(P):
    """Inertia test: positivity on the nullspace holds iff ``neg(P) + neg(C) = m``."""
    neg_P = P.factor.inertia[1]
    neg_C = inertia_of(P.C)[1]
    return AssumptionReport(neg_P + neg_C == P.m, neg_P, neg_C, P.m)


def check_cg_applicability(K_inertia, C_inertia, m):
    """Lanczos CG needs ``neg(K) + neg(C) = m``."""
    return K_inertia[1] + C_inertia[1] == m


def apply_cp(P, r1, r2):
    """Solve ``P [z1; z2] = [r1; r2]`` with residual-driven refinement."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if r1.shape != (P.n,) or r2.shape != (P.m,):
        raise DimensionError(f"expected lengths ({P.n}, {P.m}), got ({r1.size}, {r2.size})")
    rhs = np.concatenate([r1, r2])
    z, _, steps = refine_solve(P.factor, P.matrix, rhs, P.refine_tol, P.refine_max)
    P.refine_steps += steps
    return z[:P.n], z[P.n:]


def project_step(P, u, t):
    """Projection with right-hand side ``[u; -t]``, returning ``(pbar, zbar)``.

    With semi-refinement the right-hand side is shifted by the previous
    multiplier, ``[u - B^T zp; -(t - C zp)]``; the solve then returns
    ``zbar - zp`` and the shift is added back, so both modes return the
    same pair in exact arithmetic.
    """
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    if not P.semi_refine:
        return apply_cp(P, u, -t)
    zp = P.zbar_prev
    pbar, dz = apply_cp(P, u - P.B.rmatvec(zp), -(t - P.C.matvec(zp)))
    zbar = dz + zp
    P.zbar_prev = zbar.copy()
    return pbar, zbar


def p_seminorm(P, rx, tol_neg=TOL_NEG):
    """``sqrt(rx^T h)`` where ``h`` is the leading part of ``P^{-1} [rx; 0]``."""
    rx = np.asarray(rx, dtype=float)
    h, _ = apply_cp(P, rx, np.zeros(P.m))
    q = float(rx @ h)
    if q < -tol_neg * float(rx @ rx):
        raise IndefiniteError(f"negative [P]-quadratic form {q:.3e}")
    return float(np.sqrt(max(q, 0.0)))
