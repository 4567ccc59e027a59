"""Compiled likelihood pass for ``{-a, +a}`` supports.

Mirrors ``filtering._PairKernel`` step for step but keeps nothing except the
running sums, which is all the likelihood needs.  Falls back to the NumPy
kernel when numba is unavailable.
"""
from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

OK, ZERO_INTENSITY, TRUNCATED = 0, 1, 2


def _pair_pass(times, sizes, horizon, k0, probs0, q0, a, nu_minus, nu_plus, phi, eps, j_max, delta, lost_tol):
    """Returns ``(status, at_jump, sum log lambda, sum log survival, grid integral)``."""
    cap = probs0.shape[0] + 2 * (times.shape[0] + 2) + 2
    p = np.zeros(cap)
    w = np.zeros(cap)
    n = probs0.shape[0]
    for i in range(n):
        p[i] = probs0[i]
    q = q0
    sum_log_lam = 0.0
    log_surv = 0.0
    integral = 0.0
    t_prev = 0.0
    n_jumps = times.shape[0]
    for i in range(n_jumps + 1):
        t = times[i] if i < n_jumps else horizon
        elapsed = t - t_prev
        d_min = 2 * k0 + q
        # trapezoid of E[D] over the global delta grid inside (t_prev, t)
        if delta > 0 and elapsed > 0:
            g0 = math.floor(t_prev / delta) + 1
            g1 = math.ceil(t / delta) - 1
            prev_off = 0.0
            prev_val = 0.0
            num = 0.0
            den = 0.0
            for j in range(n):
                num += p[j] * (d_min + 2 * j)
                den += p[j]
            prev_val = num / den
            g = g0
            while True:
                node = g * delta
                if g > g1 or not node < t:
                    off = elapsed
                else:
                    off = node - t_prev
                    if not node > t_prev:
                        g += 1
                        continue
                num = 0.0
                den = 0.0
                for j in range(n):
                    e = p[j] * math.exp(-phi * off * 2 * j)
                    num += e * (d_min + 2 * j)
                    den += e
                val = num / den
                integral += (val + prev_val) * 0.5 * (off - prev_off)
                prev_off, prev_val = off, val
                if off == elapsed:
                    break
                g += 1
        # decay
        total = 0.0
        for j in range(n):
            w[j] = p[j] * math.exp(-2.0 * phi * elapsed * j)
            total += w[j]
        log_surv += math.log(total) - phi * d_min * elapsed
        thr = eps * total
        lo, hi = 0, n - 1
        while lo < hi and w[lo] < thr:
            lo += 1
        while hi > lo and w[hi] < thr:
            hi -= 1
        kept = 0.0
        for j in range(lo, hi + 1):
            kept += w[j]
        if 1.0 - kept / total > lost_tol:
            return TRUNCATED, i, sum_log_lam, log_surv, integral
        n = hi - lo + 1
        for j in range(n):
            p[j] = w[lo + j] / kept
        k0 += lo
        if i == n_jumps:
            break
        # jump
        y = sizes[i]
        for j in range(n + 2):
            w[j] = 0.0
        lam = 0.0
        if y == a:
            new_lo = k0 - 1 if k0 >= 1 else 0
            off = k0 - new_lo
            m = k0 + n - new_lo
            for j in range(n):
                k = k0 + j
                w[off + j] += nu_plus * p[j]
                dep = phi * k * p[j]
                lam += nu_plus * p[j] + dep
                if k >= 1:
                    w[k - 1 - new_lo] += dep
            q_new = q + 1
        elif y == -a:
            new_lo = k0
            m = n + 1
            for j in range(n):
                k = k0 + j
                w[j + 1] += nu_minus * p[j]
                dep = phi * (q + k) * p[j]
                w[j] += dep
                lam += nu_minus * p[j] + dep
            q_new = q - 1
        else:
            return ZERO_INTENSITY, i, sum_log_lam, log_surv, integral
        if not lam > 0:
            return ZERO_INTENSITY, i, sum_log_lam, log_surv, integral
        sum_log_lam += math.log(lam)
        total = 0.0
        for j in range(m):
            total += w[j]
        hi = m - 1
        cap_hi = min(j_max, j_max - q_new) - new_lo
        if cap_hi < hi:
            hi = cap_hi
        thr = eps * total
        lo = 0
        while lo < hi and w[lo] < thr:
            lo += 1
        while hi > lo and w[hi] < thr:
            hi -= 1
        kept = 0.0
        for j in range(lo, hi + 1):
            kept += w[j]
        if hi < 0 or 1.0 - kept / total > lost_tol:
            return TRUNCATED, i, sum_log_lam, log_surv, integral
        n = hi - lo + 1
        for j in range(n):
            p[j] = w[lo + j] / kept
        k0 = new_lo + lo
        q = q_new
        t_prev = t
    return OK, n_jumps, sum_log_lam, log_surv, integral


pair_pass = njit(cache=True)(_pair_pass) if njit is not None else None
