"""Primal-dual interior-point method for smooth nonlinear programs.

Problem handled::

    min  f(x)   s.t.  g(x) = 0,  h(x) <= 0

where ``g`` collects equality rows, ``h`` the finite sides of ranged rows and
the finite variable bounds. Inequalities get slacks ``z > 0`` with a log
barrier of weight ``gamma``. Each iteration takes a Newton step on the
perturbed KKT conditions using the reduced system::

    [ M    Jg^T ] [dx  ]   [ -N ]
    [ Jg   0    ] [dlam] = [ -g ]

with ``M = Hess L + dh^T diag(mu/z) dh``. The barrier weight comes from a
Mehrotra predictor (an affine step, gamma = 0) and the step itself is the
corrector solved with the same factor. Variables whose bounds coincide are
held fixed and removed from the system.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kkt import Factorization, Singular, kkt_matrix

log = logging.getLogger(__name__)

XI = 0.99995          # fraction to boundary
Z0 = 0.1              # minimum initial slack
DELTA_MIN, DELTA_MAX = 1e-8, 1e6
DELTA_C = 1e-8        # dual regularization for rank-deficient equality Jacobians
ARMIJO = 1e-4
# Relative KKT residual above which a factor is treated as unstable.
SOLVE_ACCURACY = 1e-8
POLISH = 1e-3         # stationarity/complementarity target relative to tol
POLISH_ITERS = 15     # extra iterations spent polishing an acceptable point


@dataclass
class IpmOutcome:
    reason: str            # converged | max_iter | time | stall | numerical
    x: np.ndarray
    y: np.ndarray          # per-constraint multipliers, scaled objective
    zb: np.ndarray         # per-variable bound multipliers
    iterations: int
    scale: float
    max_violation: float


def _indicator(rows, positions, n_cols):
    k = len(rows)
    return sp.csr_matrix((np.ones(k), (np.arange(k), positions)), shape=(k, n_cols))


def interior_point(cp, lower, upper, x0, *, tol=1e-6, max_iter=500, mu_init=0.1,
                   deadline=None, scale=None, line_search=False):
    """Run the interior-point iteration on a CompiledProgram with the given bounds.

    Steps are taken at the fraction-to-boundary length. ``line_search`` adds
    Armijo backtracking on an l1 merit; it tends to truncate good steps near
    curved constraints, so it is off unless asked for.
    """
    n = cp.n
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    free = lower < upper
    F = np.flatnonzero(free)
    nF = len(F)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    x[~free] = lower[~free]

    cl, cu = presolve_rows(cp, lower, upper)
    eq = cl == cu
    E = np.flatnonzero(eq)
    U = np.flatnonzero(np.isfinite(cu) & ~eq)
    L = np.flatnonzero(np.isfinite(cl) & ~eq)
    pos = np.full(n, -1)
    pos[F] = np.arange(nF)
    BU = F[np.isfinite(upper[F])]
    BL = F[np.isfinite(lower[F])]
    I_bu = _indicator(BU, pos[BU], nF)
    I_bl = _indicator(BL, pos[BL], nF)
    nE, nU, nL = len(E), len(U), len(L)
    n_rows_c = nU + nL
    niq = n_rows_c + len(BU) + len(BL)

    def values(xv):
        rows = cp.rows(xv)
        c = rows[1:]
        g = c[E] - cl[E]
        h = np.concatenate((c[U] - cu[U], cl[L] - c[L], xv[BU] - upper[BU], lower[BL] - xv[BL]))
        return rows[0], c, g, h

    def derivatives(xv):
        grad, J = cp.gradient_and_jacobian(xv)
        JF = J[:, F].tocsr()
        Jg = JF[E]
        dh = sp.vstack([JF[U], -JF[L], I_bu, -I_bl], format="csr")
        return grad[F], Jg, dh

    def full_multipliers(lam, mu):
        y = np.zeros(cp.m)
        y[E] = lam
        y[U] += mu[:nU]
        y[L] -= mu[nU:n_rows_c]
        return y

    f, c, g, h = values(x)
    gradF, Jg, dh = derivatives(x)
    if scale is None:
        gmax = np.abs(gradF).max() if nF else 0.0
        scale = 1.0 / max(1.0, gmax)
    s = scale

    z = np.maximum(-h, Z0)
    gamma = mu_init
    mu = gamma / z
    lam = np.zeros(nE)
    nu = 1.0
    delta_last = 0.0
    f_prev = s * f
    hist = []
    reason = "max_iter"
    it = 0
    acceptable = None
    acceptable_it = 0

    def violation(gv, hv):
        # constraint rows only; bound rows are repaired by clipping on exit
        v = np.abs(gv).max() if nE else 0.0
        if n_rows_c:
            v = max(v, hv[:n_rows_c].max())
        return max(v, 0.0)

    def bound_violation(hv):
        return max(hv[n_rows_c:].max(), 0.0) if niq > n_rows_c else 0.0

    for it in range(max_iter + 1):
        if not (np.isfinite(f) and np.all(np.isfinite(c))):
            reason = "numerical"
            break
        Lx = s * gradF + Jg.T @ lam + dh.T @ mu
        viol = violation(g, h)
        bviol = bound_violation(h)
        gradcond = np.abs(Lx).max() / (1 + max(np.abs(lam).max(initial=0), np.abs(mu).max(initial=0))) if nF else 0.0
        compcond = (z @ mu) / (1 + np.abs(x).max(initial=0)) if niq else 0.0
        costcond = abs(s * f - f_prev) / (1 + abs(f_prev))
        log.debug("it %3d f %.8g viol %.2e grad %.2e comp %.2e gamma %.2e", it, f, viol, gradcond, compcond, gamma)
        # converged at tol; then polished so LP vertices and objectives are accurate
        if it > 0 and viol <= tol and bviol <= tol and gradcond <= tol and costcond <= tol:
            if compcond <= POLISH * tol and gradcond <= POLISH * tol:
                reason = "converged"
                break
            if compcond <= tol:
                # meets the plain tolerance; keep it in case polishing fails
                if acceptable is None:
                    acceptable_it = it
                acceptable = (x.copy(), lam.copy(), mu.copy())
        if acceptable is not None and it - acceptable_it >= POLISH_ITERS:
            break
        if nF == 0:
            reason = "converged" if viol <= tol else "stall"
            break
        if it == max_iter:
            break
        if deadline is not None and time.monotonic() > deadline:
            reason = "time"
            break
        hist.append(max(viol, bviol))
        if max(np.abs(lam).max(initial=0), np.abs(mu).max(initial=0)) > 1e12:
            reason = "stall"
            break
        if it >= 60 and hist[-1] > 100 * tol and min(hist[-40:]) > 0.5 * min(hist[:-40]):
            reason = "stall"
            break

        # Newton system
        y = full_multipliers(lam, mu)
        H = cp.hessian(x, s, y)[F][:, F]
        w = mu / z
        M = H + dh.T @ sp.diags(w) @ dh
        C = cp.convexity_correction(y) if cp.convex else None

        def rhs(target):
            return np.concatenate((-(Lx + dh.T @ ((mu * h + target) / z)), -g))

        def slack_step(dx, target):
            dz = -h - z - dh @ dx
            return dz, -mu + (target - mu * dz) / z

        try:
            step, delta_last, fac = _solve_inertia(M, Jg, rhs(0.0), nF, nE, delta_last,
                                                   None if C is None else M + C[F][:, F])
            dz, dmu = slack_step(step[:nF], 0.0)
            if niq:
                avg = (z @ mu) / niq
                avg_aff = ((z + _ratio(z, dz) * dz) @ (mu + _ratio(mu, dmu) * dmu)) / niq
                # below the polish target a smaller barrier only costs conditioning
                gamma = max(min((avg_aff / avg) ** 3, 1.0) * avg, 0.1 * POLISH * tol / niq)
                target = gamma - dz * dmu
                try:
                    step = fac.solve(rhs(target))
                except Singular:
                    target = np.full(niq, gamma)
                    step = fac.solve(rhs(target))
                dz, dmu = slack_step(step[:nF], target)
        except Singular as e:
            log.debug("singular KKT system: %s", e)
            reason = "numerical"
            break
        dx = step[:nF]
        dlam = step[nF:]

        neg = dz < 0
        ap = min(XI * np.min(z[neg] / -dz[neg]), 1.0) if neg.any() else 1.0
        neg = dmu < 0
        ad = min(XI * np.min(mu[neg] / -dmu[neg]), 1.0) if neg.any() else 1.0

        if line_search and ap > 0:
            ap, nu, trial = _backtrack(values, s, x, F, dx, z, dz, gamma, f, g, h, gradF, nu, lam, mu, ap)
        else:
            trial = None
        if trial is None and viol <= tol:
            trial, ap = _feasibility_guard(values, violation, x, F, dx, ap, tol)
        log.debug("    ap %.3e ad %.3e delta %.1e |dx| %.2e", ap, ad, delta_last, np.abs(dx).max())
        x_new = x.copy()
        x_new[F] += ap * dx
        z = z + ap * dz
        lam = lam + ad * dlam
        mu = mu + ad * dmu
        x = x_new
        f_prev = s * f
        if trial is not None and np.array_equal(trial[0], x):
            f, c, g, h = trial[1]
        else:
            f, c, g, h = values(x)
        gradF, Jg, dh = derivatives(x)

    if reason != "converged" and reason != "time" and acceptable is not None:
        x, lam, mu = acceptable
        reason = "converged"
    x = np.clip(x, lower, upper)
    _, c, g, h = values(x)
    y = full_multipliers(lam, mu)
    zb = np.zeros(n)
    zb[BU] += mu[n_rows_c:n_rows_c + len(BU)]
    zb[BL] -= mu[n_rows_c + len(BU):]
    return IpmOutcome(reason, x, y, zb, it, s, violation(g, h))


def _ratio(v, dv):
    neg = dv < 0
    return min(np.min(v[neg] / -dv[neg]), 1.0) if neg.any() else 1.0


def _solve_inertia(M, Jg, rhs, nF, nE, delta_last, M_convex=None):
    """Solve the KKT system, regularizing until the inertia is (nF, nE, 0).

    Factors without off-diagonal pivoting first, since only those expose the
    inertia. When such a factor is singular, unreadable or inaccurate, the same
    matrix is refactored with threshold pivoting and the primal curvature of
    the step stands in for the inertia test.

    ``M_convex`` is ``M`` with the curvature of convex constraints written in a
    nonconvex way (rotated cones as bilinear rows) projected to be PSD. It is
    tried before any diagonal shift: it only adds curvature where the exact
    Hessian lacks it, whereas the shift damps every direction.
    """
    delta = 0.0 if delta_last == 0.0 else max(delta_last / 3.0, DELTA_MIN)
    dc = DELTA_C if nE else 0.0
    pivoting = False
    last_err = None
    while True:
        K = kkt_matrix(M, Jg, delta, dc)
        step = None
        try:
            fac = Factorization(K, nF, pivoting=pivoting)
            step = fac.solve(rhs)
            if fac.inertia is not None and fac.accuracy <= SOLVE_ACCURACY:
                good = fac.inertia[0] == nF and fac.inertia[1] == nE
                log.debug("      delta %.1e inertia %s want (%d, %d)", delta, fac.inertia, nF, nE)
            elif not pivoting:
                log.debug("      delta %.1e unstable factor (%.1e), pivoting", delta, fac.accuracy)
                pivoting = True
                continue
            else:
                dx = step[:nF]
                curv = dx @ (M @ dx) + delta * (dx @ dx)
                good = bool(np.isfinite(curv)) and curv >= 1e-12 * (dx @ dx) and fac.accuracy <= SOLVE_ACCURACY
        except Singular as e:
            good, last_err = False, e
        if good:
            return step, delta, fac
        if M_convex is not None:
            log.debug("      convexified curvature")
            M, M_convex, pivoting = M_convex, None, False
            continue
        if delta >= DELTA_MAX:
            if step is not None:
                return step, delta, fac
            raise Singular(str(last_err))
        delta = DELTA_MIN if delta == 0.0 else min(10.0 * delta, DELTA_MAX)


def presolve_rows(cp, lower, upper):
    """Row bounds after fixing variables and merging parallel affine rows.

    Two inequalities with the same affine body after substitution of fixed
    variables (for instance a big-M pair once its indicator is fixed) define
    an equality that no interior point can straddle; their multipliers then
    drift apart without bound. Each group of parallel rows keeps one
    representative carrying the intersected range, and rows left with no free
    variable are dropped when satisfied.
    """
    cl = cp.lower_c.copy()
    cu = cp.upper_c.copy()
    fixed = lower == upper
    groups = {}
    for k, aff in enumerate(cp.affine):
        if aff is None:
            continue
        entries, const = aff
        free = []
        for i, a in entries:
            if fixed[i]:
                const += a * lower[i]
            else:
                free.append((i, a))
        lo, hi = cl[k] - const, cu[k] - const
        if not free:
            if lo <= 1e-12 and hi >= -1e-12:
                cl[k], cu[k] = -np.inf, np.inf
            continue
        lead = free[0][1]
        key = tuple((i, round(a / lead, 12)) for i, a in free)
        lo, hi = (lo / lead, hi / lead) if lead > 0 else (hi / lead, lo / lead)
        groups.setdefault(key, []).append((k, lead, const, lo, hi))
    for rows in groups.values():
        if len(rows) < 2:
            continue
        lo = max(r[3] for r in rows)
        hi = min(r[4] for r in rows)
        if lo > hi + 1e-12:
            continue  # contradictory: leave for the infeasibility machinery
        hi = max(hi, lo)
        k, lead, const = rows[0][:3]
        a, b = (lo, hi) if lead > 0 else (hi, lo)
        cl[k], cu[k] = lead * a + const, lead * b + const
        if hi - lo <= 1e-12 * max(1.0, abs(lo)):
            cl[k] = cu[k] = lead * lo + const
        for r in rows[1:]:
            cl[r[0]], cu[r[0]] = -np.inf, np.inf
    return cl, cu


def _feasibility_guard(values, violation, x, F, dx, ap, tol, tries=10):
    """From a feasible iterate, halve the step while it loses feasibility by a wide margin."""
    alpha = ap
    for _ in range(tries):
        xt = x.copy()
        xt[F] += alpha * dx
        vals = values(xt)
        if np.isfinite(vals[0]) and violation(vals[2], vals[3]) <= 10 * tol:
            return (xt, vals), alpha
        alpha *= 0.5
    return None, ap


def _backtrack(values, s, x, F, dx, z, dz, gamma, f, g, h, gradF, nu, lam, mu, ap):
    """Armijo backtracking on an l1 barrier merit; falls back to the full step."""
    theta = np.abs(g).sum() + np.abs(h + z).sum()
    barrier_slope = s * (gradF @ dx) - gamma * np.sum(dz / z)
    nu = max(nu, 1.1 * max(np.abs(lam).max(initial=0), np.abs(mu).max(initial=0)))
    if theta > 0 and barrier_slope - nu * theta > -1e-12 * abs(barrier_slope):
        nu = max(nu, 2 * barrier_slope / theta)
    slope = barrier_slope - nu * theta
    phi0 = s * f - gamma * np.sum(np.log(z)) + nu * theta
    if slope >= 0:
        return ap, nu, None
    alpha = ap
    for _ in range(8):
        xt = x.copy()
        xt[F] += alpha * dx
        zt = z + alpha * dz
        vals = values(xt)
        ft, _, gt, ht = vals
        if np.isfinite(ft) and np.all(np.isfinite(ht)) and np.all(np.isfinite(gt)):
            phi = s * ft - gamma * np.sum(np.log(zt)) + nu * (np.abs(gt).sum() + np.abs(ht + zt).sum())
            if phi <= phi0 + ARMIJO * alpha * slope:
                return alpha, nu, (xt, vals)
        alpha *= 0.5
    return ap, nu, None
