"""Solvers built on the constraint-preconditioned Lanczos process.

Every iterate is updated as ``x += c p`` and ``y -= c q`` so that, starting
from a point with ``B x0 - C y0 = 0``, the constraint residual stays zero.
"""

from __future__ import annotations

import numpy as np

from ..processes import cp_lanczos_step, lanczos_start
from ..saddle import TOL_NEG, IndefiniteError, apply_cp
from ._common import (BREAKDOWN, CONVERGED, INDEFINITE, MAX_ITERATIONS, SolveResult,
                      SolverOptions, starting_point, threshold)

__all__ = ["solve_cp_minres", "solve_cp_cg", "solve_cp_symmlq"]


def _begin(sys, P, x0, y0, opts):
    opts = SolverOptions() if opts is None else opts
    x, y, u0 = starting_point(sys, x0, y0)
    state = lanczos_start(sys.A, sys.C, P, u0, np.zeros(sys.m))
    return opts, x, y, state


def _indefinite(x, y, history, k, method, exc):
    return SolveResult(x, y, k, history, INDEFINITE, method, message=str(exc))


def _notify(opts, k, x, y):
    if opts.callback is not None:
        opts.callback(k, x, y)


def solve_cp_minres(sys, P, x0=None, y0=None, opts=None):
    """MINRES on the Lanczos tridiagonal with plane rotations.

    The history is the rotation byproduct ``|phibar_k|``, which equals the
    ``[P]``-seminorm of the current residual.
    """
    try:
        opts, x, y, st = _begin(sys, P, x0, y0, opts)
    except IndefiniteError as exc:
        x, y, _ = starting_point(sys, x0, y0)
        return _indefinite(x, y, [np.nan], 0, "minres", exc)
    beta1 = st.beta
    history = [beta1]
    tol = threshold(opts, beta1)
    if beta1 <= tol:
        return SolveResult(x, y, 0, history, CONVERGED, "minres")
    maxit = opts.max_iterations(sys)
    cs, sn = -1.0, 0.0
    dbar = epsln = 0.0
    phibar = beta1
    wx1 = np.zeros(sys.n)
    wy1 = np.zeros(sys.m)
    wx2, wy2 = wx1.copy(), wy1.copy()
    status = MAX_ITERATIONS
    k = 0
    while k < maxit:
        px, qy = st.p, st.q
        try:
            st = cp_lanczos_step(st, sys, P)
        except IndefiniteError as exc:
            return _indefinite(x, y, history, k, "minres", exc)
        k += 1
        alpha, beta = st.alpha, st.beta
        oldeps = epsln
        delta = cs * dbar + sn * alpha
        gbar = sn * dbar - cs * alpha
        epsln = sn * beta
        dbar = -cs * beta
        gamma = np.hypot(gbar, beta)
        if gamma == 0.0:
            history.append(phibar)
            status = BREAKDOWN
            break
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        wx = (px - oldeps * wx1 - delta * wx2) / gamma
        wy = (-qy - oldeps * wy1 - delta * wy2) / gamma
        wx1, wy1, wx2, wy2 = wx2, wy2, wx, wy
        x += phi * wx
        y += phi * wy
        history.append(abs(phibar))
        _notify(opts, k, x, y)
        if abs(phibar) <= tol or st.finished:
            status = CONVERGED
            break
    return SolveResult(x, y, k, history, status, "minres")


def solve_cp_cg(sys, P, x0=None, y0=None, opts=None, form="lanczos"):
    """CG minimizing ``(x-x*)^T A (x-x*) + (y-y*)^T C (y-y*)`` over the Krylov space.

    ``form="lanczos"`` runs the LDL^T recurrences of the Lanczos
    tridiagonal; ``form="traditional"`` runs the residual/direction
    recurrences with one preconditioner solve per iteration.  A nonpositive
    pivot or curvature ends the run with status ``breakdown``.
    """
    if form == "lanczos":
        return _cg_lanczos(sys, P, x0, y0, opts)
    if form == "traditional":
        return _cg_traditional(sys, P, x0, y0, opts)
    raise ValueError(f"unknown CG form {form!r}")


def _cg_lanczos(sys, P, x0, y0, opts):
    try:
        opts, x, y, st = _begin(sys, P, x0, y0, opts)
    except IndefiniteError as exc:
        x, y, _ = starting_point(sys, x0, y0)
        return _indefinite(x, y, [np.nan], 0, "cg-lanczos", exc)
    beta1 = st.beta
    history = [beta1]
    tol = threshold(opts, beta1)
    if beta1 <= tol:
        return SolveResult(x, y, 0, history, CONVERGED, "cg-lanczos")
    maxit = opts.max_iterations(sys)
    dx = np.zeros(sys.n)
    dy = np.zeros(sys.m)
    zeta = beta1
    eta = None
    status = MAX_ITERATIONS
    k = 0
    while k < maxit:
        px, qy, beta_k = st.p, st.q, st.beta
        try:
            st = cp_lanczos_step(st, sys, P)
        except IndefiniteError as exc:
            return _indefinite(x, y, history, k, "cg-lanczos", exc)
        k += 1
        alpha = st.alpha
        if eta is None:
            eta_new = alpha
        else:
            lam = beta_k / eta
            zeta = -lam * zeta
            eta_new = alpha - lam * beta_k
        if eta_new <= 0.0:
            history.append(history[-1])
            status = BREAKDOWN
            break
        eta = eta_new
        dx = (px - beta_k * dx) / eta if k > 1 else px / eta
        dy = (-qy - beta_k * dy) / eta if k > 1 else -qy / eta
        x += zeta * dx
        y += zeta * dy
        res = st.beta * abs(zeta) / eta
        history.append(res)
        _notify(opts, k, x, y)
        if res <= tol or st.finished:
            status = CONVERGED
            break
    return SolveResult(x, y, k, history, status, "cg-lanczos",
                       message="nonpositive pivot in T_k" if status == BREAKDOWN else "")


def _cg_traditional(sys, P, x0, y0, opts):
    opts = SolverOptions() if opts is None else opts
    x, y, _ = starting_point(sys, x0, y0)
    P.reset()
    # rho = b - A x; the term B^T y is absorbed by the solve.  The second
    # block uses B x rather than the equal (on feasible points) C y so that
    # the constraint drift of the iterates is corrected at every solve.
    rho = sys.b1 - sys.A.apply(x)

    def precondition(rho):
        g, v = apply_cp(P, rho, -sys.B.matvec(x))
        zy = v - y
        gam = float(rho @ g - y @ sys.B.matvec(g))
        return g, zy, gam

    zx, zy, gam = precondition(rho)
    if gam < -TOL_NEG * float(rho @ rho):
        return SolveResult(x, y, 0, [np.nan], INDEFINITE, "cg",
                           message="negative [P]-seminorm")
    history = [float(np.sqrt(max(gam, 0.0)))]
    tol = threshold(opts, history[0])
    if history[0] <= tol:
        return SolveResult(x, y, 0, history, CONVERGED, "cg")
    maxit = opts.max_iterations(sys)
    dx, dy = zx.copy(), zy.copy()
    status = MAX_ITERATIONS
    k = 0
    while k < maxit:
        adx = sys.A.apply(dx)
        cdy = sys.C.matvec(dy)
        kappa = float(dx @ adx + dy @ cdy)
        if kappa <= 0.0:
            status = BREAKDOWN
            history.append(history[-1])
            k += 1
            break
        a = gam / kappa
        x += a * dx
        y += a * dy
        rho -= a * adx
        zx, zy, gam_new = precondition(rho)
        k += 1
        if gam_new < -TOL_NEG * float(rho @ rho):
            history.append(history[-1])
            return SolveResult(x, y, k, history, INDEFINITE, "cg",
                               message="negative [P]-seminorm")
        history.append(float(np.sqrt(max(gam_new, 0.0))))
        _notify(opts, k, x, y)
        if history[-1] <= tol:
            status = CONVERGED
            break
        b = gam_new / gam
        gam = gam_new
        dx = zx + b * dx
        dy = zy + b * dy
    return SolveResult(x, y, k, history, status, "cg",
                       message="nonpositive curvature" if status == BREAKDOWN else "")


def solve_cp_symmlq(sys, P, x0=None, y0=None, opts=None):
    """SYMMLQ on the Lanczos tridiagonal.

    Internally the LQ iterates are carried (these are what ``callback``
    sees).  The history records the ``[P]``-seminorm of the residual at the
    CG point of each iteration, which is available at no cost, and the
    returned solution is transferred to the CG point of the last iteration
    whenever that point exists.
    """
    try:
        opts, x, y, st = _begin(sys, P, x0, y0, opts)
    except IndefiniteError as exc:
        x, y, _ = starting_point(sys, x0, y0)
        return _indefinite(x, y, [np.nan], 0, "symmlq", exc)
    beta1 = st.beta
    history = [beta1]
    tol = threshold(opts, beta1)
    if beta1 <= tol:
        return SolveResult(x, y, 0, history, CONVERGED, "symmlq")
    maxit = opts.max_iterations(sys)
    wbx, wby = st.p.copy(), -st.q
    c2, s2 = -1.0, 0.0  # rotation k-2
    c1, s1 = -1.0, 0.0  # rotation k-1
    z2 = z1 = 0.0       # zeta_{k-2}, zeta_{k-1}
    cg_point = None
    status = MAX_ITERATIONS
    k = 0
    while k < maxit:
        beta_k = st.beta
        try:
            st = cp_lanczos_step(st, sys, P)
        except IndefiniteError as exc:
            return _indefinite(x, y, history, k, "symmlq", exc)
        k += 1
        alpha, beta = st.alpha, st.beta
        eps = s2 * beta_k
        dbar = -c2 * beta_k
        delta = c1 * dbar + s1 * alpha
        gbar = s1 * dbar - c1 * alpha
        num = (beta1 if k == 1 else 0.0) - eps * z2 - delta * z1
        if gbar != 0.0:
            zbar = num / gbar
            cg_res = beta * abs(s1 * z1 - c1 * zbar)
            cg_point = (x + zbar * wbx, y + zbar * wby)
        else:
            cg_res = np.inf
            cg_point = None
        history.append(cg_res)
        if cg_res <= tol:
            status = CONVERGED
            break
        gamma = np.hypot(gbar, beta)
        if gamma == 0.0:
            status = BREAKDOWN
            break
        c, s = gbar / gamma, beta / gamma
        zeta = num / gamma
        vx, vy = st.p, -st.q
        wx = c * wbx + s * vx
        wy = c * wby + s * vy
        wbx = s * wbx - c * vx
        wby = s * wby - c * vy
        x += zeta * wx
        y += zeta * wy
        c2, s2, c1, s1 = c1, s1, c, s
        z2, z1 = z1, zeta
        _notify(opts, k, x, y)
        if st.finished:
            # beta_{k+1} = 0 and gbar = 0: T_k is singular
            status = BREAKDOWN
            break
    if cg_point is not None:
        x, y = cg_point
    if opts.callback is not None and status == CONVERGED:
        opts.callback(k, x, y)
    return SolveResult(x, y, k, history, status, "symmlq")
