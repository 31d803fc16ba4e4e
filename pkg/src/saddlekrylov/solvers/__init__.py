"""Constraint-preconditioned Krylov solvers and the general right-hand-side driver."""

from __future__ import annotations

import numpy as np

from ..linops import DimensionError, as_storage
from ..saddle import RegularizedSaddleSystem, apply_cp, build_constraint_preconditioner
from ._common import (BREAKDOWN, CONVERGED, INDEFINITE, MAX_ITERATIONS, STATUSES,
                      InfeasibleStartError, SolveResult, SolverOptions)
from .arnoldi import solve_cp_dqgmres, solve_cp_gmres
from .lanczos import solve_cp_cg, solve_cp_minres, solve_cp_symmlq

__all__ = [
    "SolverOptions",
    "SolveResult",
    "CONVERGED",
    "MAX_ITERATIONS",
    "BREAKDOWN",
    "INDEFINITE",
    "STATUSES",
    "METHODS",
    "InfeasibleStartError",
    "solve_cp_minres",
    "solve_cp_cg",
    "solve_cp_symmlq",
    "solve_cp_gmres",
    "solve_cp_dqgmres",
    "run_method",
    "reg_cpkrylov",
]

METHODS = ("cg", "cg-lanczos", "minres", "symmlq", "gmres", "dqgmres")
FEASIBILITY_TOL = 1e-8


def run_method(method, sys, P, x0=None, y0=None, opts=None):
    """Dispatch to a solver by name (``cg`` is the traditional CG form)."""
    if method == "cg":
        return solve_cp_cg(sys, P, x0, y0, opts, form="traditional")
    if method == "cg-lanczos":
        return solve_cp_cg(sys, P, x0, y0, opts, form="lanczos")
    solvers = {"minres": solve_cp_minres, "symmlq": solve_cp_symmlq,
               "gmres": solve_cp_gmres, "dqgmres": solve_cp_dqgmres}
    if method not in solvers:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return solvers[method](sys, P, x0, y0, opts)


def reg_cpkrylov(sys, G=None, method="minres", opts=None, P=None):
    """Solve ``[[A, B^T], [B, -C]] [x; y] = [b1; b2]`` with a CP-Krylov method.

    A nonzero ``b2`` is handled by first solving ``P [dx; dy] = [0; b2]``,
    which satisfies ``B dx - C dy = b2``, and then solving for the
    correction with zero initial guess.  ``G`` defaults to the diagonal of
    ``A`` (which must then be explicit).  A prebuilt preconditioner may be
    passed as ``P``.  A run that reports convergence but whose final point
    violates the constraint block is downgraded to ``breakdown``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    opts = SolverOptions() if opts is None else opts
    if P is None:
        if G is None:
            if sys.A.matrix is None:
                raise ValueError("G must be given when A is only available as an operator")
            G = np.diag(sys.A.matrix.diagonal())
        Gs = as_storage(G, symmetric=True)
        if Gs.shape != (sys.n, sys.n):
            raise DimensionError(f"G must be {sys.n}x{sys.n}, got {Gs.rows}x{Gs.cols}")
        P = build_constraint_preconditioner(Gs, sys.B, sys.C, opts.refine_tol, opts.refine_max,
                                            opts.semi_refine, opts.strict_assumption)
    if np.any(sys.b2):
        dx, dy = apply_cp(P, np.zeros(sys.n), sys.b2)
        b = sys.b1 - sys.A.apply(dx) - sys.B.rmatvec(dy)
    else:
        dx, dy = np.zeros(sys.n), np.zeros(sys.m)
        b = sys.b1
    shifted = RegularizedSaddleSystem(sys.A, sys.B, sys.C, b)
    res = run_method(method, shifted, P, None, None, opts)
    res.x = res.x + dx
    res.y = res.y + dy
    res.relative_residual = sys.relative_residual(res.x, res.y)
    if res.status == CONVERGED:
        r2 = sys.b2 - sys.B.matvec(res.x) + sys.C.matvec(res.y)
        scale = (sys.B.norm() * np.linalg.norm(res.x) + sys.C.norm() * np.linalg.norm(res.y)
                 + np.linalg.norm(sys.b2))
        if np.linalg.norm(r2) > FEASIBILITY_TOL * max(scale, np.finfo(float).tiny):
            res.status = BREAKDOWN
            res.message = f"constraint residual {np.linalg.norm(r2):.3e} too large"
    return res
