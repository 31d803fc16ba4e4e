"""Constraint-preconditioned Krylov solvers for regularized saddle-point systems.

The main entry point is :func:`reg_cpkrylov`, which solves
``[[A, B^T], [B, -C]] [x; y] = [b1; b2]`` with a constraint preconditioner
``[[G, B^T], [B, -C]]`` and one of the methods in :data:`METHODS`.
"""

from .factor import Factorization, SingularMatrixError, factorize_symmetric_indefinite, inertia_of
from .linops import (DimensionError, LinearOperator, MatrixMarketError, MatrixStorage,
                     aslinearoperator, read_matrix_market, write_matrix_market)
from .processes import InfeasibleStartError, cp_arnoldi, cp_lanczos
from .saddle import (AssumptionError, AssumptionWarning, ConstraintPreconditioner,
                     IndefiniteError, RegularizedSaddleSystem, build_constraint_preconditioner)
from .solvers import (METHODS, SolveResult, SolverOptions, reg_cpkrylov, solve_cp_cg,
                      solve_cp_dqgmres, solve_cp_gmres, solve_cp_minres, solve_cp_symmlq)

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "AssumptionWarning",
    "ConstraintPreconditioner",
    "DimensionError",
    "Factorization",
    "IndefiniteError",
    "InfeasibleStartError",
    "LinearOperator",
    "METHODS",
    "MatrixMarketError",
    "MatrixStorage",
    "RegularizedSaddleSystem",
    "SingularMatrixError",
    "SolveResult",
    "SolverOptions",
    "aslinearoperator",
    "build_constraint_preconditioner",
    "cp_arnoldi",
    "cp_lanczos",
    "factorize_symmetric_indefinite",
    "inertia_of",
    "read_matrix_market",
    "reg_cpkrylov",
    "solve_cp_cg",
    "solve_cp_dqgmres",
    "solve_cp_gmres",
    "solve_cp_minres",
    "solve_cp_symmlq",
    "write_matrix_market",
]
