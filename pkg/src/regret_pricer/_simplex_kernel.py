"""Compiled inner loop for the bounded-variable simplex.

Mirrors the pure-numpy loop in ``milp._Simplex.run`` exactly: devex pricing
with Bland's rule after a stall, the same ratio test and bound-flip logic,
drift-probed refactorization. Split out so numba can compile it; the numpy
path stays behind as a fallback (set REGRET_PRICER_NO_NUMBA=1 to force it).

Return codes: 0 optimal, 1 unbounded, 2 stall cycle (caller perturbs),
3 iteration limit, 4 repeated tiny pivots, 5 basis residual blow-up.
"""

from __future__ import annotations

import os

import numpy as np

try:
    if os.environ.get("REGRET_PRICER_NO_NUMBA"):
        raise ImportError("numba disabled by environment")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap

OPTIMAL, UNBOUNDED, STALL_CYCLE, ITER_LIMIT, TINY_PIVOT, RESIDUAL = 0, 1, 2, 3, 4, 5

_BASIC, _AT_LOWER, _AT_UPPER, _FREE = 0, 1, 2, 3


@njit(cache=True)
def _refactor(A, basis, Binv):  # pragma: no cover - compiled
    m = basis.shape[0]
    B = np.empty((m, m))
    for p in range(m):
        col = basis[p]
        for r in range(m):
            B[r, p] = A[r, col]
    Binv[:, :] = np.linalg.inv(B)
    return B


@njit(cache=True)
def _drift(A, basis, Binv, probe):  # pragma: no cover - compiled
    m = basis.shape[0]
    worst = 0.0
    for t in range(probe.shape[1]):
        p = probe[:, t]
        z = Binv @ np.ascontiguousarray(p)
        acc = np.zeros(m)
        for pos in range(m):
            col = basis[pos]
            zp = z[pos]
            for r in range(m):
                acc[r] += A[r, col] * zp
        for r in range(m):
            err = abs(acc[r] - p[r])
            if err > worst:
                worst = err
    return worst


@njit(cache=True)
def simplex_loop(A, b, c_phase, lb, ub, basis, status, val, Binv, xb,
                 n_struct, allow_unbounded, iter_limit):  # pragma: no cover - compiled
    m, n = A.shape
    stall_limit = 2 * (m + n_struct)
    stalled = 0
    bland = False
    since_check = 0
    tiny = 0
    iterations = 0
    scale = 1.0
    for j in range(n):
        a = abs(c_phase[j])
        if a > scale:
            scale = a
    dj_tol = max(1e-9, 1e-10 * scale)

    probe = np.empty((m, 2))
    for r in range(m):
        probe[r, 0] = 1.0
        probe[r, 1] = np.cos(r + 1.0)

    gamma = np.ones(n)
    lo_b = np.empty(m)
    hi_b = np.empty(m)
    for r in range(m):
        lo_b[r] = lb[basis[r]]
        hi_b[r] = ub[basis[r]]

    while True:
        iterations += 1
        since_check += 1
        if iterations > iter_limit:
            return ITER_LIMIT, iterations
        if since_check >= 64 or (stalled > 0 and since_check >= 16):
            since_check = 0
            err = _drift(A, basis, Binv, probe)
            if err > 1e-9:
                _refactor(A, basis, Binv)
                rest = val.copy()
                for r in range(m):
                    rest[basis[r]] = 0.0
                xb[:] = Binv @ (b - A @ rest)
                err = _drift(A, basis, Binv, probe)
                if err > 1e-7 and not bland:
                    bland = True
                if err > 1e-3:
                    return RESIDUAL, iterations

        # pricing
        cb = np.empty(m)
        for r in range(m):
            cb[r] = c_phase[basis[r]]
        y = cb @ Binv
        d = c_phase - y @ A

        e = -1
        best_score = 0.0
        for j in range(n):
            st = status[j]
            if st == _BASIC:
                continue
            if ub[j] - lb[j] <= 1e-12:
                continue
            dj = d[j]
            ok = (st == _AT_LOWER and dj < -dj_tol) or \
                 (st == _AT_UPPER and dj > dj_tol) or \
                 (st == _FREE and (dj > dj_tol or dj < -dj_tol))
            if not ok:
                continue
            if bland:
                e = j
                break
            score = dj * dj / gamma[j]
            if score > best_score:
                best_score = score
                e = j
        if e < 0:
            return OPTIMAL, iterations

        sigma = 1.0 if (status[e] == _AT_LOWER or d[e] < 0.0) else -1.0
        col_e = np.ascontiguousarray(A[:, e])
        w = Binv @ col_e

        # ratio test
        t_block = np.inf
        for r in range(m):
            mv = sigma * w[r]
            if mv > 1e-9:
                t = (xb[r] - lo_b[r]) / mv
            elif mv < -1e-9:
                t = (hi_b[r] - xb[r]) / (-mv)
            else:
                continue
            if t < 0.0:
                t = 0.0
            if t < t_block:
                t_block = t
        span = ub[e] - lb[e]
        t_star = t_block if t_block < span else span

        if not np.isfinite(t_star):
            if allow_unbounded:
                return UNBOUNDED, iterations
            return RESIDUAL, iterations

        if span <= t_block:
            for r in range(m):
                xb[r] -= sigma * w[r] * span
            if sigma > 0:
                val[e] = ub[e]
                status[e] = _AT_UPPER
            else:
                val[e] = lb[e]
                status[e] = _AT_LOWER
            improvement = abs(d[e]) * span
        else:
            # leaving row: among near-ties take the largest pivot, or the
            # lowest basic index under Bland's rule
            r_pick = -1
            best_piv = 0.0
            best_idx = n + 1
            for r in range(m):
                mv = sigma * w[r]
                if mv > 1e-9:
                    t = (xb[r] - lo_b[r]) / mv
                elif mv < -1e-9:
                    t = (hi_b[r] - xb[r]) / (-mv)
                else:
                    continue
                if t < 0.0:
                    t = 0.0
                if t <= t_block + 1e-9:
                    if bland:
                        if basis[r] < best_idx:
                            best_idx = basis[r]
                            r_pick = r
                    else:
                        piv = abs(w[r])
                        if piv > best_piv:
                            best_piv = piv
                            r_pick = r
            r = r_pick
            if abs(w[r]) < 1e-12:
                tiny += 1
                if tiny > 5:
                    return TINY_PIVOT, iterations
                _refactor(A, basis, Binv)
                rest = val.copy()
                for rr in range(m):
                    rest[basis[rr]] = 0.0
                xb[:] = Binv @ (b - A @ rest)
                continue
            tiny = 0
            leave = basis[r]
            hit_lower = sigma * w[r] > 0.0
            for rr in range(m):
                xb[rr] -= sigma * w[rr] * t_star
            enter_val = val[e] + sigma * t_star
            if hit_lower:
                val[leave] = lo_b[r]
                status[leave] = _AT_LOWER
            else:
                val[leave] = hi_b[r]
                status[leave] = _AT_UPPER
            basis[r] = e
            status[e] = _BASIC
            xb[r] = enter_val
            lo_b[r] = lb[e]
            hi_b[r] = ub[e]
            if not bland:
                # devex update along the pivot row
                alpha = np.ascontiguousarray(Binv[r, :]) @ A
                ref = gamma[e] / (w[r] * w[r])
                gmax = 0.0
                for j in range(n):
                    g = alpha[j] * alpha[j] * ref
                    if g > gamma[j]:
                        gamma[j] = g
                    if gamma[j] > gmax:
                        gmax = gamma[j]
                gamma[leave] = ref if ref > 1.0 else 1.0
                if gmax > 1e8:
                    for j in range(n):
                        gamma[j] = 1.0
            piv = w[r]
            row_r = Binv[r, :] / piv
            for rr in range(m):
                if rr != r:
                    wrr = w[rr]
                    if wrr != 0.0:
                        for cc in range(m):
                            Binv[rr, cc] -= wrr * row_r[cc]
            Binv[r, :] = row_r
            improvement = abs(d[e]) * t_star

        if improvement <= 1e-12:
            stalled += 1
            if stalled > stall_limit:
                bland = True
            if stalled > stall_limit + 400:
                return STALL_CYCLE, iterations
        else:
            stalled = 0
