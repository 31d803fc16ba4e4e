"""Solvers built on the constraint-preconditioned Arnoldi process."""

from __future__ import annotations

from collections import deque

import numpy as np
import scipy.linalg as sla

from ..processes import arnoldi_start, cp_arnoldi_step
from ..saddle import IndefiniteError
from ._common import (CONVERGED, INDEFINITE, MAX_ITERATIONS, SolveResult, SolverOptions,
                      starting_point, threshold)

__all__ = ["solve_cp_gmres", "solve_cp_dqgmres"]


def _givens(a, b):
    # rotation [c s; -s c] mapping (a, b) to (r, 0)
    r = np.hypot(a, b)
    if r == 0.0:
        return 1.0, 0.0, 0.0
    return a / r, b / r, r


def solve_cp_gmres(sys, P, x0=None, y0=None, opts=None):
    """Restarted GMRES(``opts.restart``).

    Each cycle restarts the Arnoldi process from the current iterate, whose
    residual is recomputed explicitly.  The history holds the Givens
    residual ``|g_{j+1}|`` after every iteration.
    """
    opts = SolverOptions() if opts is None else opts
    x, y, u0 = starting_point(sys, x0, y0)
    maxit = opts.max_iterations(sys)
    history = []
    status = MAX_ITERATIONS
    total = 0
    tol = None
    while True:
        if total > 0:
            u0 = sys.b1 - sys.A.apply(x) - sys.B.rmatvec(y)
        try:
            st = arnoldi_start(sys.A, sys.C, P, u0, np.zeros(sys.m))
        except IndefiniteError as exc:
            if not history:
                history.append(np.nan)
            return SolveResult(x, y, total, history, INDEFINITE, "gmres", message=str(exc))
        beta = st.h_next
        if tol is None:
            history.append(beta)
            tol = threshold(opts, beta)
        if beta <= tol:
            status = CONVERGED
            break
        rots = []
        R = []
        g = [beta]
        Vp = [st.p]
        Vq = [st.q]
        failure = None
        converged = False
        for _ in range(opts.restart):
            try:
                st = cp_arnoldi_step(st, sys, P)
            except IndefiniteError as exc:
                failure = exc
                break
            total += 1
            _, h = st.columns[-1]
            h = h.copy()
            for i, (c, s) in enumerate(rots):
                h[i], h[i + 1] = c * h[i] + s * h[i + 1], -s * h[i] + c * h[i + 1]
            c, s, r = _givens(h[-2], h[-1])
            h[-2], h[-1] = r, 0.0
            rots.append((c, s))
            R.append(h[:-1])
            g.append(-s * g[-1])
            g[-2] = c * g[-2]
            history.append(abs(g[-1]))
            if abs(g[-1]) <= tol or st.finished:
                converged = True
            if opts.callback is not None:
                xk, yk = _combine(x, y, R, g, Vp, Vq)
                opts.callback(total, xk, yk)
            if converged or total >= maxit:
                break
            Vp.append(st.p)
            Vq.append(st.q)
        if R:
            x, y = _combine(x, y, R, g, Vp, Vq)
        if failure is not None:
            return SolveResult(x, y, total, history, INDEFINITE, "gmres", message=str(failure))
        if converged:
            status = CONVERGED
            break
        if total >= maxit:
            break
    return SolveResult(x, y, total, history, status, "gmres")


def _combine(x, y, R, g, Vp, Vq):
    j = len(R)
    Rm = np.zeros((j, j))
    for col, h in enumerate(R):
        Rm[:col + 1, col] = h
    c = sla.solve_triangular(Rm, np.asarray(g[:j]), check_finite=False)
    x = x + sum(ci * p for ci, p in zip(c, Vp))
    y = y - sum(ci * q for ci, q in zip(c, Vq))
    return x, y


def solve_cp_dqgmres(sys, P, x0=None, y0=None, opts=None):
    """Direct quasi-GMRES with an Arnoldi window of ``opts.mem`` vectors.

    Only ``mem`` basis pairs and ``mem`` direction pairs are stored.  The
    history holds the quasi-residual ``|gamma_{k+1}|``, an estimate of the
    ``[P]``-seminorm residual that is also used for stopping.
    """
    opts = SolverOptions() if opts is None else opts
    x, y, u0 = starting_point(sys, x0, y0)
    mem = opts.mem
    try:
        st = arnoldi_start(sys.A, sys.C, P, u0, np.zeros(sys.m), mem=mem)
    except IndefiniteError as exc:
        return SolveResult(x, y, 0, [np.nan], INDEFINITE, "dqgmres", True, str(exc))
    gam = st.h_next
    history = [gam]
    tol = threshold(opts, gam)
    if gam <= tol:
        return SolveResult(x, y, 0, history, CONVERGED, "dqgmres", True)
    maxit = opts.max_iterations(sys)
    rots = deque(maxlen=mem)   # rotations k-mem .. k-1
    dirs = deque(maxlen=mem)   # direction pairs d_{k-mem} .. d_{k-1}
    status = MAX_ITERATIONS
    k = 0
    while k < maxit:
        px, qy = st.p, st.q
        try:
            st = cp_arnoldi_step(st, sys, P)
        except IndefiniteError as exc:
            return SolveResult(x, y, k, history, INDEFINITE, "dqgmres", True, str(exc))
        k += 1
        i0, h = st.columns[-1]
        # r holds rows k-mem .. k+1 of column k (1-based)
        lo = k - mem
        r = np.zeros(mem + 2)
        r[i0 - lo:] = h
        for idx, (c, s) in enumerate(rots):
            i = k - len(rots) + idx  # rotation index, acting on rows i, i+1
            a, b = r[i - lo], r[i + 1 - lo]
            r[i - lo], r[i + 1 - lo] = c * a + s * b, -s * a + c * b
        c, s, rkk = _givens(r[mem], r[mem + 1])
        rots.append((c, s))
        gam_k = c * gam
        gam = -s * gam
        dx, dy = px.copy(), -qy
        for idx, (ex, ey) in enumerate(dirs):
            i = k - len(dirs) + idx
            dx -= r[i - lo] * ex
            dy -= r[i - lo] * ey
        dx /= rkk
        dy /= rkk
        dirs.append((dx, dy))
        x += gam_k * dx
        y += gam_k * dy
        history.append(abs(gam))
        if opts.callback is not None:
            opts.callback(k, x, y)
        if abs(gam) <= tol or st.finished:
            status = CONVERGED
            break
    return SolveResult(x, y, k, history, status, "dqgmres", True)
