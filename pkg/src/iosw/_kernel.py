"""Compiled RK4 stepper for the price/quantity dynamics.

Pure loops over small dense matrices; the Python-level API lives in
:mod:`iosw.dynamics`.
"""

import numpy as np
from numba import njit

RUNNING = 0
CONVERGED = 1
TIME_LIMIT = 2
DIVERGED = 3


@njit(cache=True)
def _rhs(q, v, g, dq, dp, G, P, oq, ov, og, p):
    # returns -1, or the index of the first sector with a nonpositive price
    n = q.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += P[i, j] * v[j]
        p[i] = s
    for i in range(n):
        if not p[i] > 0.0:
            return i
        oq[i] = dq[i] * g[i] / p[i]
        ov[i] = dp[i] * g[i]
    for i in range(n):
        a = 0.0
        b = 0.0
        c = 0.0
        for j in range(n):
            a += G[i, j] * oq[j]
            b += G[i, j] * q[j]
            c += P[i, j] * ov[j]
        og[i] = -a * p[i] - b * c
    return -1


@njit(cache=True)
def _try_step(q, v, g, dq, dp, G, P, h, K, S, p, out):
    """One RK4 step from (q, v, g) into ``out``; returns -1 or an offending sector."""
    n = q.shape[0]
    bad = _rhs(q, v, g, dq, dp, G, P, K[0, 0], K[0, 1], K[0, 2], p)
    if bad >= 0:
        return bad
    for s in range(1, 4):
        c = 0.5 * h if s < 3 else h
        for i in range(n):
            S[0, i] = q[i] + c * K[s - 1, 0, i]
            S[1, i] = v[i] + c * K[s - 1, 1, i]
            S[2, i] = g[i] + c * K[s - 1, 2, i]
        bad = _rhs(S[0], S[1], S[2], dq, dp, G, P, K[s, 0], K[s, 1], K[s, 2], p)
        if bad >= 0:
            return bad
    w = h / 6.0
    for k in range(3):
        src = q if k == 0 else (v if k == 1 else g)
        for i in range(n):
            out[k, i] = src[i] + w * (K[0, k, i] + 2.0 * K[1, k, i] + 2.0 * K[2, k, i] + K[3, k, i])
    for i in range(n):
        if not out[0, i] > 0.0:
            return i
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += P[i, j] * out[1, j]
        if not s > 0.0:
            return i
    return -1


@njit(cache=True)
def advance(q, v, g, dq, dp, G, P, h, t, t_max, tol, max_steps, max_halvings):
    """Integrate in place until converged, ``t >= t_max`` or ``max_steps`` steps.

    Returns ``(t, steps, status, sector)``; ``sector`` is meaningful only when
    ``status == DIVERGED``.
    """
    n = q.shape[0]
    K = np.empty((4, 3, n))
    S = np.empty((3, n))
    p = np.empty(n)
    out = np.empty((3, n))
    steps = 0
    while True:
        gmax = 0.0
        for i in range(n):
            a = abs(g[i])
            if a > gmax:
                gmax = a
        if gmax <= tol:
            return t, steps, CONVERGED, -1
        if t >= t_max:
            return t, steps, TIME_LIMIT, -1
        if steps >= max_steps:
            return t, steps, RUNNING, -1
        hh = h
        bad = _try_step(q, v, g, dq, dp, G, P, hh, K, S, p, out)
        halvings = 0
        while bad >= 0:
            halvings += 1
            if halvings > max_halvings:
                return t, steps, DIVERGED, bad
            hh *= 0.5
            bad = _try_step(q, v, g, dq, dp, G, P, hh, K, S, p, out)
        for i in range(n):
            q[i] = out[0, i]
            v[i] = out[1, i]
            g[i] = out[2, i]
        t += hh
        steps += 1
