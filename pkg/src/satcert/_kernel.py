"""Compiled RK4 loops for the saturated loop; pure-Python fallbacks when
numba is unavailable (same arithmetic, much slower)."""
from __future__ import annotations

import numpy as np

try:
    import numba
    _jit = numba.njit(cache=True)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    def _jit(f):
        return f
    HAVE_NUMBA = False


@_jit
def _rhs(A, B, K, lo, hi, x, out, s):
    n = x.size
    m = lo.size
    for j in range(m):
        v = 0.0
        for k in range(n):
            v += K[j, k] * x[k]
        s[j] = min(max(v, lo[j]), hi[j])
    for i in range(n):
        v = 0.0
        for k in range(n):
            v += A[i, k] * x[k]
        for j in range(m):
            v -= B[i, j] * s[j]
        out[i] = v


@_jit
def _step(A, B, K, lo, hi, x, dt, k1, k2, k3, k4, t, s):
    n = x.size
    _rhs(A, B, K, lo, hi, x, k1, s)
    for i in range(n):
        t[i] = x[i] + 0.5 * dt * k1[i]
    _rhs(A, B, K, lo, hi, t, k2, s)
    for i in range(n):
        t[i] = x[i] + 0.5 * dt * k2[i]
    _rhs(A, B, K, lo, hi, t, k3, s)
    for i in range(n):
        t[i] = x[i] + dt * k3[i]
    _rhs(A, B, K, lo, hi, t, k4, s)
    for i in range(n):
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@_jit
def _V(P, h, K, lo, hi, x):
    n = x.size
    v = 0.0
    for i in range(n):
        for k in range(n):
            v += x[i] * P[i, k] * x[k]
    for j in range(h.size):
        u = 0.0
        for k in range(n):
            u += K[j, k] * x[k]
        d = u - min(max(u, lo[j]), hi[j])
        v += h[j] * (u * u - d * d)
    return 0.5 * v


@_jit
def _quad(P, x):
    n = x.size
    q = 0.0
    for i in range(n):
        for k in range(n):
            q += x[i] * P[i, k] * x[k]
    return q


@_jit
def path(A, B, K, lo, hi, x0, dt, N):
    n = x0.size
    m = lo.size
    X = np.empty((N + 1, n))
    x = x0.copy()
    X[0] = x
    k1, k2, k3, k4, t = np.empty(n), np.empty(n), np.empty(n), np.empty(n), np.empty(n)
    s = np.empty(m)
    for k in range(N):
        _step(A, B, K, lo, hi, x, dt, k1, k2, k3, k4, t, s)
        X[k + 1] = x
    return X


@_jit
def stream(A, B, K, lo, hi, P, h, use_V, x0, dt, nmax, Pt, ct, radius):
    """One run until it enters ``x'Pt x <= ct`` or ``nmax`` steps.

    Returns ``(steps, settled, last_out, max_increment, max_abs_u, x, finite)``
    where ``last_out`` is the last step index with ``|x| > radius``
    (``-1`` if none).
    """
    n = x0.size
    m = lo.size
    x = x0.copy()
    k1, k2, k3, k4, t = np.empty(n), np.empty(n), np.empty(n), np.empty(n), np.empty(n)
    s = np.empty(m)
    r2 = radius * radius
    last = -1
    if _quad(np.eye(n), x) > r2:
        last = 0
    umax = 0.0
    for j in range(m):
        u = 0.0
        for k in range(n):
            u += K[j, k] * x[k]
        umax = max(umax, abs(u))
    vp = _V(P, h, K, lo, hi, x) if use_V else 0.0
    inc = -np.inf
    step = 0
    while True:
        if ct >= 0.0 and _quad(Pt, x) <= ct:
            return step, True, last, inc, umax, x, True
        if step >= nmax:
            return step, False, last, inc, umax, x, True
        _step(A, B, K, lo, hi, x, dt, k1, k2, k3, k4, t, s)
        step += 1
        rr = 0.0
        for i in range(n):
            rr += x[i] * x[i]
        if not np.isfinite(rr):
            return step, False, last, inc, umax, x, False
        if rr > r2:
            last = step
        for j in range(m):
            u = 0.0
            for k in range(n):
                u += K[j, k] * x[k]
            umax = max(umax, abs(u))
        if use_V:
            v = _V(P, h, K, lo, hi, x)
            if v - vp > inc:
                inc = v - vp
            vp = v
