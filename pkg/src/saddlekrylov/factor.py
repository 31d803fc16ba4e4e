"""Dense direct factorizations with inertia and iterative refinement."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .linops import DimensionError, as_storage

__all__ = [
    "SingularMatrixError",
    "Factorization",
    "factorize_symmetric_indefinite",
    "factorize_lu",
    "factor_solve",
    "refine_solve",
    "inertia_of",
    "DROP_TOL",
]

DROP_TOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a factorization has (numerically) zero pivots."""


@dataclass(frozen=True, eq=False)
class Factorization:
    """Factors of a square matrix plus what they reveal.

    ``inertia`` is ``(n_pos, n_neg, n_zero)`` for the symmetric-indefinite
    kind and ``None`` for LU.  ``n_zero`` counts pivots below the drop
    tolerance; such a factorization refuses to solve.
    """

    size: int
    kind: str
    inertia: Optional[tuple]
    singular: bool
    _solve: object = field(repr=False)
    factors: dict = field(default_factory=dict, repr=False)

    def solve(self, rhs):
        return factor_solve(self, rhs)

    @classmethod
    def from_ldl(cls, lu, d, perm, drop_tol=DROP_TOL):
        """Build a symmetric-indefinite factorization from ``M = L D L^T`` factors.

        ``lu``, ``d`` and ``perm`` follow :func:`scipy.linalg.ldl`: ``lu[perm]``
        is unit lower triangular and ``d`` is block diagonal with 1x1 and 2x2
        blocks.
        """
        n = d.shape[0]
        blocks = _pivot_blocks(d)
        eigs = []
        for start, size in blocks:
            blk = d[start:start + size, start:start + size]
            eigs.extend(np.linalg.eigvalsh(blk) if size == 2 else [blk[0, 0]])
        eigs = np.asarray(eigs, dtype=float)
        scale = np.abs(eigs).max(initial=0.0)
        zero = np.abs(eigs) <= drop_tol * scale if scale > 0 else np.ones(n, dtype=bool)
        inertia = (int(np.sum((eigs > 0) & ~zero)), int(np.sum((eigs < 0) & ~zero)),
                   int(np.sum(zero)))
        singular = inertia[2] > 0

        solve = None
        if not singular:
            dinv = sp.lil_matrix((n, n))
            for start, size in blocks:
                sl = slice(start, start + size)
                dinv[sl, sl] = np.linalg.inv(d[sl, sl])
            dinv = dinv.tocsr()
            lt = np.ascontiguousarray(lu[perm])

            def solve(b):
                w = sla.solve_triangular(lt, b[perm], lower=True, unit_diagonal=True,
                                         check_finite=False)
                v = dinv @ w
                u = sla.solve_triangular(lt, v, lower=True, trans="T", unit_diagonal=True,
                                         check_finite=False)
                z = np.empty_like(u)
                z[perm] = u
                return z

        return cls(n, "symmetric-indefinite", inertia, singular, solve,
                   {"lu": lu, "d": d, "perm": perm})


def _pivot_blocks(d):
    n = d.shape[0]
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


def _square_dense(M):
    s = as_storage(M)
    if s.rows != s.cols:
        raise DimensionError(f"matrix must be square, got {s.rows}x{s.cols}")
    return s, s.toarray()


def factorize_symmetric_indefinite(M, require_nonsingular=False, drop_tol=DROP_TOL):
    """Bunch-Kaufman ``L D L^T`` of a symmetric matrix, reporting inertia.

    Zero pivots are those whose magnitude is at most ``drop_tol`` times the
    largest pivot magnitude.
    """
    s, a = _square_dense(M)
    if not s.is_symmetric:
        raise ValueError("factorize_symmetric_indefinite needs storage tagged symmetric")
    if a.shape[0] == 0:
        raise DimensionError("empty matrix")
    lu, d, perm = sla.ldl(a, lower=True)
    F = Factorization.from_ldl(lu, d, perm, drop_tol=drop_tol)
    if require_nonsingular and F.singular:
        raise SingularMatrixError(f"matrix is singular (inertia {F.inertia})")
    return F


def factorize_lu(M, require_nonsingular=False, drop_tol=DROP_TOL):
    """LU with partial pivoting; no inertia is reported."""
    _, a = _square_dense(M)
    n = a.shape[0]
    with warnings.catch_warnings():
        # exact singularity is reported through ``singular`` below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    diag = np.abs(np.diag(lu))
    scale = diag.max(initial=0.0)
    singular = bool(scale == 0.0 or np.any(diag <= drop_tol * scale))
    if require_nonsingular and singular:
        raise SingularMatrixError("matrix is singular (zero pivot in LU)")

    def solve(b):
        return sla.lu_solve((lu, piv), b, check_finite=False)

    return Factorization(n, "lu-general", None, singular, solve, {"lu": lu, "piv": piv})


def factor_solve(F, rhs):
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (F.size,):
        raise DimensionError(f"right-hand side must have length {F.size}, got {rhs.shape}")
    if F.singular:
        raise SingularMatrixError("cannot solve with a singular factorization")
    return F._solve(rhs)


def refine_solve(F, M, rhs, tol, max_steps):
    """Solve with ``F`` and refine against ``M`` until the relative residual is below ``tol``.

    Returns ``(z, relative_residual, steps)``.  A correction that would
    increase the residual is discarded and refinement stops, so the
    reported residual never grows.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_steps < 0:
        raise ValueError("max_steps must be nonnegative")
    s = as_storage(M)
    rhs = np.asarray(rhs, dtype=float)
    z = factor_solve(F, rhs)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return z, 0.0, 0
    r = rhs - s.matvec(z)
    res = np.linalg.norm(r) / bnorm
    steps = 0
    while res > tol and steps < max_steps:
        z_new = z + factor_solve(F, r)
        r_new = rhs - s.matvec(z_new)
        res_new = np.linalg.norm(r_new) / bnorm
        if res_new >= res:
            break
        z, r, res = z_new, r_new, res_new
        steps += 1
    return z, float(res), steps


def inertia_of(M, drop_tol=DROP_TOL):
    """Inertia of a symmetric matrix via ``L D L^T``."""
    return factorize_symmetric_indefinite(as_storage(M, symmetric=True), drop_tol=drop_tol).inertia
