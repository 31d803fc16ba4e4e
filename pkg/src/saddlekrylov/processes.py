"""Constraint-preconditioned Lanczos and Arnoldi basis generation.

Both processes work with the pair ``(p_k, q_k)``: ``p_k`` lives in the
primal space and ``q_k`` in the multiplier space.  Apart from the
preconditioner solves, only products with ``A``, ``C`` and (in the default
stabilized mode) ``B`` and ``G`` are needed.  In full-space terms the k-th
basis vector is ``[p_k; -q_k]``.

Three numerical safeguards are on by default (``stabilized=True``); all
leave the exact-arithmetic output unchanged:

* The projection right-hand side is ``[A p_k; B p_k]`` rather than
  ``[A p_k; -C q_k]``.  These agree while ``B p_k + C q_k = 0``, but with the
  second form any rounding error in that constraint is multiplied by about
  ``alpha_k / beta_{k+1}`` at every step.
* The normalizer is computed as ``p^T G p + q^T C q`` of the orthogonalized
  vector.  The shortcut ``p^T u_k + q^T t_k`` relies on exact orthogonality
  against the previous vectors, and its error is again amplified by
  ``alpha_k / beta_{k+1}`` from one step to the next.
* Arnoldi orthogonalizes by two passes of modified Gram-Schmidt in the
  same metric, using stored products ``G p_i`` and ``C q_i``, instead of
  the classical coefficients ``p_i^T u_k + q_i^T t_k``.  A single pass
  loses orthogonality as the residual of the associated GMRES iterate
  decreases.

With ``stabilized=False`` the textbook recurrences are run as written.
The processes are exposed as step functions on plain state objects so a
solver can drive them one iteration at a time.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .saddle import TOL_NEG, IndefiniteError, project_step

__all__ = [
    "InfeasibleStartError",
    "ProcessFinished",
    "LanczosState",
    "ArnoldiState",
    "TridiagonalData",
    "LanczosTrace",
    "ArnoldiTrace",
    "BREAKDOWN_TOL",
    "normalizer",
    "lanczos_start",
    "cp_lanczos_init",
    "cp_lanczos_step",
    "cp_lanczos",
    "lanczos_trace",
    "arnoldi_start",
    "cp_arnoldi_init",
    "cp_arnoldi_step",
    "cp_arnoldi",
    "arnoldi_trace",
    "check_feasible_start",
]

# Squared normalizers at or below BREAKDOWN_TOL * scale count as zero.
BREAKDOWN_TOL = 1e-13


class InfeasibleStartError(ValueError):
    """The starting pair violates ``B x0 - C q0 = 0``."""


class ProcessFinished(RuntimeError):
    """A step was requested after the process terminated."""


def normalizer(sq, scale, what="beta"):
    """Square root of a squared normalizer, with breakdown handling.

    ``scale`` bounds the size of the terms that were added up to form
    ``sq``; values below ``-TOL_NEG * scale`` reveal an indefinite
    preconditioner, values below ``BREAKDOWN_TOL * scale`` are zero.
    """
    if sq < -TOL_NEG * scale:
        raise IndefiniteError(f"{what}^2 = {sq:.3e} < 0: preconditioner indefinite on the nullspace")
    if sq <= BREAKDOWN_TOL * scale:
        return 0.0
    return float(np.sqrt(sq))


def check_feasible_start(sys, x0, q0, tol=1e-10):
    r = sys.B.matvec(x0) - sys.C.matvec(q0)
    bound = tol * (sys.B.norm() * np.linalg.norm(x0) + sys.C.norm() * np.linalg.norm(q0))
    if np.linalg.norm(r) > bound:
        raise InfeasibleStartError(
            f"starting point violates B x0 - C q0 = 0 (residual {np.linalg.norm(r):.3e})")


def _starting_pair(sys, x0, q0):
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float)
    q0 = np.zeros(sys.m) if q0 is None else np.asarray(q0, dtype=float)
    if x0.shape != (sys.n,) or q0.shape != (sys.m,):
        raise ValueError("starting vectors have the wrong length")
    check_feasible_start(sys, x0, q0)
    return x0, q0


def _first_vector(C, P, u0, q0):
    # shared by both processes: project [u0; -C q0], then q1 = q0 - zbar1
    t0 = C.matvec(q0)
    pbar, zbar = project_step(P, u0, t0)
    s = np.subtract(q0, zbar, out=zbar)
    scale = np.linalg.norm(pbar) * np.linalg.norm(u0) + np.linalg.norm(s) * np.linalg.norm(t0)
    beta = normalizer(pbar @ u0 + s @ t0, scale, "beta_1")
    if beta != 0.0:
        pbar /= beta
        s /= beta
    return pbar, s, t0, beta


def _normalize(sys, P, p_new, q_new, u, t, pbar, s, stabilized, what):
    """Normalizer of ``(p_new, q_new)`` and, when computed, ``G p_new``, ``C q_new``."""
    if stabilized:
        gp = P.G.matvec(p_new)
        cq = sys.C.matvec(q_new)
        sq = p_new @ gp + q_new @ cq
        scale = P.G.norm() * (pbar @ pbar) + sys.C.norm() * (s @ s)
    else:
        gp = cq = None
        sq = p_new @ u + q_new @ t
        scale = np.linalg.norm(pbar) * np.linalg.norm(u) + np.linalg.norm(s) * np.linalg.norm(t)
    return normalizer(sq, scale, what), gp, cq


# -- Lanczos -------------------------------------------------------------------

@dataclass
class LanczosState:
    """Recurrence data after ``k - 1`` steps.

    ``p``, ``q`` are the current (k-th) normalized vectors and ``beta`` their
    normalizer beta_k.  ``alpha`` is alpha_{k-1} from the last step and
    ``u``, ``t`` are the products ``A p_{k-1}``, ``C q_{k-1}`` (``u_0``,
    ``t_0`` right after initialization).  ``cq`` caches ``C q`` when known.
    """

    k: int
    p_prev: np.ndarray
    p: np.ndarray
    q_prev: np.ndarray
    q: np.ndarray
    u: np.ndarray
    t: np.ndarray
    alpha: Optional[float]
    beta: float
    beta_prev: Optional[float] = None
    finished: bool = False
    stabilized: bool = True
    cq: Optional[np.ndarray] = field(default=None, repr=False)


def lanczos_start(A, C, P, u0, q0, stabilized=True):
    """Initialize from a given ``u0`` (normally ``b - A x0``) and ``q0``."""
    P.reset()
    u0 = np.asarray(u0, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    p1, q1, t0, beta = _first_vector(C, P, u0, q0)
    return LanczosState(1, np.zeros_like(p1), p1, q0.copy(), q1, u0, t0, None, beta,
                        None, beta == 0.0, stabilized)


def cp_lanczos_init(sys, P, x0=None, q0=None, stabilized=True):
    """Start the process with ``u0 = b1 - A x0`` and ``t0 = C q0``."""
    x0, q0 = _starting_pair(sys, x0, q0)
    return lanczos_start(sys.A, sys.C, P, sys.b1 - sys.A.apply(x0), q0, stabilized)


def cp_lanczos_step(state, sys, P):
    """One Lanczos step: returns the state holding ``p_{k+1}``, ``q_{k+1}``."""
    if state.finished:
        raise ProcessFinished("Lanczos process already terminated")
    p, q, beta = state.p, state.q, state.beta
    u = sys.A.apply(p)
    t = sys.C.matvec(q) if state.cq is None else state.cq
    alpha = float(p @ u + q @ t)
    pbar, zbar = project_step(P, u, -sys.B.matvec(p) if state.stabilized else t)
    s = np.subtract(q, zbar, out=zbar)  # s_{k+1} overwrites zbar_{k+1}
    p_new = pbar - alpha * p - beta * state.p_prev
    q_new = s - alpha * q - beta * state.q_prev
    beta_new, _, cq = _normalize(sys, P, p_new, q_new, u, t, pbar, s, state.stabilized,
                              f"beta_{state.k + 1}")
    if beta_new != 0.0:
        p_new /= beta_new
        q_new /= beta_new
        if cq is not None:
            cq /= beta_new
    return LanczosState(state.k + 1, p, p_new, q, q_new, u, t, alpha, beta_new, beta,
                        beta_new == 0.0, state.stabilized, cq)


def cp_lanczos(sys, P, x0=None, q0=None, maxiter=None, stabilized=True):
    """Yield the initial state and then the state after each step."""
    state = cp_lanczos_init(sys, P, x0, q0, stabilized)
    yield state
    while not state.finished and (maxiter is None or state.k <= maxiter):
        state = cp_lanczos_step(state, sys, P)
        yield state


@dataclass
class TridiagonalData:
    """Diagonal ``alpha_1..alpha_k`` and off-diagonal ``beta_2..beta_k`` of ``T_k``."""

    diag: list = field(default_factory=list)
    offdiag: list = field(default_factory=list)

    def __post_init__(self):
        if self.diag and len(self.diag) != len(self.offdiag) + 1:
            raise ValueError("offdiag must be one shorter than diag")

    def to_dense(self):
        T = np.diag(np.asarray(self.diag, dtype=float))
        if len(self.diag) > 1:
            off = np.asarray(self.offdiag, dtype=float)
            T += np.diag(off, 1) + np.diag(off, -1)
        return T


@dataclass
class LanczosTrace:
    """Vectors ``p_1..p_K`` (normalized), ``alpha_1..alpha_K``, ``beta_1..beta_{K+1}``.

    ``q`` holds the multiplier-space vectors in the same order.
    """

    p: list
    q: list
    alpha: list
    beta: list

    def tridiagonal(self, k=None):
        k = len(self.alpha) if k is None else k
        return TridiagonalData(list(self.alpha[:k]), list(self.beta[1:k]))


def lanczos_trace(sys, P, x0=None, q0=None, maxiter=20, stabilized=True):
    """Run the process for at most ``maxiter`` steps and collect the trace."""
    states = list(cp_lanczos(sys, P, x0, q0, maxiter, stabilized))
    trace = LanczosTrace([], [], [], [states[0].beta])
    if states[0].beta != 0.0:
        trace.p.append(states[0].p.copy())
        trace.q.append(states[0].q.copy())
    for st in states[1:]:
        trace.alpha.append(st.alpha)
        trace.beta.append(st.beta)
        if st.beta != 0.0:
            trace.p.append(st.p.copy())
            trace.q.append(st.q.copy())
    return trace


# -- Arnoldi -------------------------------------------------------------------

def _hessenberg(columns):
    ncol = len(columns)
    H = np.zeros((ncol + 1, ncol))
    for j, (i0, h) in enumerate(columns, start=1):
        H[i0 - 1:j + 1, j - 1] = h
    return H


@dataclass
class ArnoldiState:
    """Windowed Arnoldi data.

    ``basis_p``/``basis_q`` hold ``p_i``, ``q_i`` for ``i = first, ..., k``
    (at most ``mem`` pairs when truncated).  ``columns[j - 1]`` is the pair
    ``(i0, h)`` with ``h = [h_{i0,j}, ..., h_{j,j}, h_{j+1,j}]``.  ``h_next``
    is the normalizer of the current vector (``h_{1,0}`` after init).
    """

    k: int
    basis_p: deque
    basis_q: deque
    columns: list
    h_next: float
    u: np.ndarray
    t: np.ndarray
    mem: Optional[int] = None
    finished: bool = False
    stabilized: bool = True
    cq: Optional[np.ndarray] = field(default=None, repr=False)
    basis_gp: Optional[deque] = field(default=None, repr=False)
    basis_cq: Optional[deque] = field(default=None, repr=False)

    @property
    def first(self):
        return self.k - len(self.basis_p) + 1

    @property
    def p(self):
        return self.basis_p[-1]

    @property
    def q(self):
        return self.basis_q[-1]

    @property
    def H(self):
        return self.columns

    def hessenberg(self):
        """Dense ``k x (k-1)`` upper Hessenberg matrix of the computed columns."""
        return _hessenberg(self.columns)


def arnoldi_start(A, C, P, u0, q0, mem=None, stabilized=True):
    if mem is not None and mem < 1:
        raise ValueError("mem must be at least 1")
    P.reset()
    u0 = np.asarray(u0, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    p1, q1, t0, h10 = _first_vector(C, P, u0, q0)
    gp = cq = None
    if stabilized:
        gp = deque([P.G.matvec(p1)], maxlen=mem)
        cq = deque([C.matvec(q1)], maxlen=mem)
    return ArnoldiState(1, deque([p1], maxlen=mem), deque([q1], maxlen=mem), [], h10, u0, t0,
                        mem, h10 == 0.0, stabilized, None if cq is None else cq[-1], gp, cq)


def cp_arnoldi_init(sys, P, x0=None, q0=None, mem=None, stabilized=True):
    x0, q0 = _starting_pair(sys, x0, q0)
    return arnoldi_start(sys.A, sys.C, P, sys.b1 - sys.A.apply(x0), q0, mem, stabilized)


def cp_arnoldi_step(state, sys, P):
    """One Arnoldi step, orthogonalizing against the stored window."""
    if state.finished:
        raise ProcessFinished("Arnoldi process already terminated")
    k = state.k
    p, q = state.p, state.q
    u = sys.A.apply(p)
    t = sys.C.matvec(q) if state.cq is None else state.cq
    pbar, zbar = project_step(P, u, -sys.B.matvec(p) if state.stabilized else t)
    s = np.subtract(q, zbar, out=zbar)
    p_new, q_new = pbar.copy(), s.copy()
    h = np.empty(len(state.basis_p) + 1)
    if state.stabilized:
        h[:-1] = 0.0
        pairs = list(zip(state.basis_p, state.basis_q, state.basis_gp, state.basis_cq))
        for _ in range(2):
            for idx, (pi, qi, gpi, cqi) in enumerate(pairs):
                hik = float(gpi @ p_new + cqi @ q_new)
                h[idx] += hik
                p_new -= hik * pi
                q_new -= hik * qi
    else:
        for idx, (pi, qi) in enumerate(zip(state.basis_p, state.basis_q)):
            hik = float(pi @ u + qi @ t)
            h[idx] = hik
            p_new -= hik * pi
            q_new -= hik * qi
    h_new, gp, cq = _normalize(sys, P, p_new, q_new, u, t, pbar, s, state.stabilized,
                               f"h_{k + 1},{k}")
    h[-1] = h_new
    if h_new != 0.0:
        p_new /= h_new
        q_new /= h_new
        if cq is not None:
            gp /= h_new
            cq /= h_new
    bp = deque(state.basis_p, maxlen=state.mem)
    bq = deque(state.basis_q, maxlen=state.mem)
    bp.append(p_new)
    bq.append(q_new)
    bgp = bcq = None
    if state.stabilized:
        bgp = deque(state.basis_gp, maxlen=state.mem)
        bcq = deque(state.basis_cq, maxlen=state.mem)
        bgp.append(gp)
        bcq.append(cq)
    cols = state.columns + [(state.first, h)]
    return ArnoldiState(k + 1, bp, bq, cols, h_new, u, t, state.mem, h_new == 0.0,
                        state.stabilized, cq, bgp, bcq)


def cp_arnoldi(sys, P, x0=None, q0=None, mem=None, maxiter=None, stabilized=True):
    state = cp_arnoldi_init(sys, P, x0, q0, mem, stabilized)
    yield state
    while not state.finished and (maxiter is None or state.k <= maxiter):
        state = cp_arnoldi_step(state, sys, P)
        yield state


@dataclass
class ArnoldiTrace:
    """Vectors ``p_1..``, ``q_1..``, ``h10`` and the Hessenberg columns."""

    p: list
    q: list
    h10: float
    columns: list

    def hessenberg(self):
        return _hessenberg(self.columns)


def arnoldi_trace(sys, P, x0=None, q0=None, mem=None, maxiter=20, stabilized=True):
    states = list(cp_arnoldi(sys, P, x0, q0, mem, maxiter, stabilized))
    first = states[0]
    trace = ArnoldiTrace([], [], first.h_next, [])
    if first.h_next != 0.0:
        trace.p.append(first.p.copy())
        trace.q.append(first.q.copy())
    for st in states[1:]:
        trace.columns.append(st.columns[-1])
        if st.h_next != 0.0:
            trace.p.append(st.p.copy())
            trace.q.append(st.q.copy())
    return trace
