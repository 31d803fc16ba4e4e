"""Options, results and shared plumbing for the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..processes import InfeasibleStartError, check_feasible_start

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
BREAKDOWN = "breakdown"
INDEFINITE = "indefinite_detected"
STATUSES = (CONVERGED, MAX_ITERATIONS, BREAKDOWN, INDEFINITE)


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rule and method parameters.

    A solver stops once the ``[P]``-seminorm of the residual drops to
    ``atol + rtol * r0`` where ``r0`` is the initial value.  ``maxit=None``
    means ``2 (n + m)``.  ``callback(k, x, y)``, if given, sees every iterate.
    """

    atol: float = 1e-8
    rtol: float = 1e-6
    maxit: Optional[int] = None
    mem: int = 2
    restart: int = 20
    semi_refine: bool = False
    strict_assumption: bool = False
    refine_tol: float = 1e-10
    refine_max: int = 2
    callback: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.atol < 0 or self.rtol < 0:
            raise ValueError("atol and rtol must be nonnegative")
        if self.maxit is not None and self.maxit < 1:
            raise ValueError("maxit must be at least 1")
        if self.mem < 2:
            raise ValueError("mem must be at least 2")
        if self.restart < 1:
            raise ValueError("restart must be at least 1")

    def replace(self, **kw):
        return replace(self, **kw)

    def max_iterations(self, sys):
        return 2 * (sys.n + sys.m) if self.maxit is None else self.maxit


@dataclass
class SolveResult:
    """Final iterate, iteration count and ``[P]``-seminorm residual history.

    ``history[0]`` is the initial residual, ``history[k]`` the value after
    iteration ``k``.  For DQGMRES the entries are estimates
    (``history_is_estimate``).
    """

    x: np.ndarray
    y: np.ndarray
    iterations: int
    history: list
    status: str
    method: str = ""
    history_is_estimate: bool = False
    message: str = ""
    relative_residual: Optional[float] = None

    @property
    def converged(self):
        return self.status == CONVERGED


def starting_point(sys, x0, y0):
    """Validate ``(x0, y0)`` and return copies plus ``b - A x0 - B^T y0``."""
    x = np.zeros(sys.n) if x0 is None else np.array(x0, dtype=float)
    y = np.zeros(sys.m) if y0 is None else np.array(y0, dtype=float)
    if x.shape != (sys.n,) or y.shape != (sys.m,):
        raise ValueError("starting vectors have the wrong length")
    check_feasible_start(sys, x, y)
    u0 = sys.b1 - sys.A.apply(x) - sys.B.rmatvec(y)
    return x, y, u0


def threshold(opts, r0):
    return opts.atol + opts.rtol * r0


__all__ = [
    "SolverOptions",
    "SolveResult",
    "CONVERGED",
    "MAX_ITERATIONS",
    "BREAKDOWN",
    "INDEFINITE",
    "STATUSES",
    "InfeasibleStartError",
    "starting_point",
    "threshold",
]
