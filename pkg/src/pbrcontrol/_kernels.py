"""Compiled fixed-step RK4 kernels for light-phase segments.

The growth law is passed as an integer kind plus a coefficient vector so a
single compiled kernel serves every model family. Night and singular
segments never reach this module; they have closed forms.

Step layout is shared by every kernel: ``floor(duration / step)`` full steps
followed by one shortened step covering the remainder.
"""

import math

import numpy as np
from numba import njit

NEG_TOL = -1e-12


@njit(cache=True)
def growth(kind, c, x):
    if kind == 0:
        e = c[2] * math.exp(-c[1] * x)
        return c[0] / c[1] * math.log1p(-c[2] * math.expm1(-c[1] * x) / (e + c[3]))
    return c[0] * x * (1.0 - x / c[1]) + c[2] * x


@njit(cache=True)
def growth_prime(kind, c, x):
    if kind == 0:
        e = c[2] * math.exp(-c[1] * x)
        return c[0] * e / (e + c[3])
    return c[0] * (1.0 - 2.0 * x / c[1]) + c[2]


@njit(cache=True)
def _steps(duration, step):
    n = int(math.floor(duration / step))
    last = duration - n * step
    if last <= 1e-12 * step:
        last = 0.0
    return n, last


@njit(cache=True)
def _rk4(kind, c, rate, u, x, h):
    """One RK4 step of x' = f(x) - rate x with yield y' = u x."""
    k1 = growth(kind, c, x) - rate * x
    x2 = x + 0.5 * h * k1
    k2 = growth(kind, c, x2) - rate * x2
    x3 = x + 0.5 * h * k2
    k3 = growth(kind, c, x3) - rate * x3
    x4 = x + h * k3
    k4 = growth(kind, c, x4) - rate * x4
    xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    dy = u * h / 6.0 * (x + 2.0 * x2 + 2.0 * x3 + x4)
    return xn, dy


@njit(cache=True)
def day_advance(kind, c, r, u, x0, duration, step):
    """Terminal state and yield of a light segment. Returns (x, yield, ok)."""
    n, last = _steps(duration, step)
    rate = r + u
    x = x0
    y = 0.0
    for _ in range(n):
        x, dy = _rk4(kind, c, rate, u, x, step)
        y += dy
        if x < NEG_TOL:
            return x, y, False
    if last > 0.0:
        x, dy = _rk4(kind, c, rate, u, x, last)
        y += dy
    return x, y, x >= NEG_TOL


@njit(cache=True)
def _rk4_sens(kind, c, rate, u, x, s, h):
    """RK4 step of x together with its sensitivity s = dx/dx0."""
    k1 = growth(kind, c, x) - rate * x
    j1 = (growth_prime(kind, c, x) - rate) * s
    x2 = x + 0.5 * h * k1
    s2 = s + 0.5 * h * j1
    k2 = growth(kind, c, x2) - rate * x2
    j2 = (growth_prime(kind, c, x2) - rate) * s2
    x3 = x + 0.5 * h * k2
    s3 = s + 0.5 * h * j2
    k3 = growth(kind, c, x3) - rate * x3
    j3 = (growth_prime(kind, c, x3) - rate) * s3
    x4 = x + h * k3
    s4 = s + h * j3
    k4 = growth(kind, c, x4) - rate * x4
    j4 = (growth_prime(kind, c, x4) - rate) * s4
    xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    sn = s + h / 6.0 * (j1 + 2.0 * j2 + 2.0 * j3 + j4)
    return xn, sn


@njit(cache=True)
def day_advance_sens(kind, c, r, u, x0, s0, duration, step):
    """Terminal state and sensitivity of a light segment. Returns (x, s, ok)."""
    n, last = _steps(duration, step)
    rate = r + u
    x = x0
    s = s0
    for _ in range(n):
        x, s = _rk4_sens(kind, c, rate, u, x, s, step)
        if x < NEG_TOL:
            return x, s, False
    if last > 0.0:
        x, s = _rk4_sens(kind, c, rate, u, x, s, last)
    return x, s, x >= NEG_TOL


@njit(cache=True)
def day_samples(kind, c, r, u, x0, duration, step):
    """Sampled light segment: relative times, states, cumulative yields."""
    n, last = _steps(duration, step)
    m = n + 1 + (1 if last > 0.0 else 0)
    ts = np.empty(m)
    xs = np.empty(m)
    ys = np.empty(m)
    rate = r + u
    ts[0] = 0.0
    xs[0] = x0
    ys[0] = 0.0
    x = x0
    y = 0.0
    for i in range(n):
        x, dy = _rk4(kind, c, rate, u, x, step)
        y += dy
        ts[i + 1] = (i + 1) * step
        xs[i + 1] = x
        ys[i + 1] = y
    if last > 0.0:
        x, dy = _rk4(kind, c, rate, u, x, last)
        y += dy
        ts[m - 1] = duration
        xs[m - 1] = x
        ys[m - 1] = y
    return ts, xs, ys


@njit(cache=True)
def _rk4_adjoint(kind, c, r, u, x, phi, p, h):
    """RK4 step of (x, Phi, p) with a = -f'(x) + r + u,
    Phi' = a Phi, p' = a p - u."""
    rate = r + u
    a1 = -growth_prime(kind, c, x) + rate
    k1 = growth(kind, c, x) - rate * x
    l1 = a1 * phi
    m1 = a1 * p - u
    x2 = x + 0.5 * h * k1
    a2 = -growth_prime(kind, c, x2) + rate
    k2 = growth(kind, c, x2) - rate * x2
    l2 = a2 * (phi + 0.5 * h * l1)
    m2 = a2 * (p + 0.5 * h * m1) - u
    x3 = x + 0.5 * h * k2
    a3 = -growth_prime(kind, c, x3) + rate
    k3 = growth(kind, c, x3) - rate * x3
    l3 = a3 * (phi + 0.5 * h * l2)
    m3 = a3 * (p + 0.5 * h * m2) - u
    x4 = x + h * k3
    a4 = -growth_prime(kind, c, x4) + rate
    k4 = growth(kind, c, x4) - rate * x4
    l4 = a4 * (phi + h * l3)
    m4 = a4 * (p + h * m3) - u
    xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    phin = phi + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
    pn = p + h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
    return xn, phin, pn


@njit(cache=True)
def day_adjoint(kind, c, r, u, x0, phi0, p0, duration, step):
    """Sampled light segment of the state plus the two adjoint components."""
    n, last = _steps(duration, step)
    m = n + 1 + (1 if last > 0.0 else 0)
    ts = np.empty(m)
    xs = np.empty(m)
    phis = np.empty(m)
    ps = np.empty(m)
    ts[0] = 0.0
    xs[0] = x0
    phis[0] = phi0
    ps[0] = p0
    x, phi, p = x0, phi0, p0
    for i in range(n):
        x, phi, p = _rk4_adjoint(kind, c, r, u, x, phi, p, step)
        ts[i + 1] = (i + 1) * step
        xs[i + 1] = x
        phis[i + 1] = phi
        ps[i + 1] = p
    if last > 0.0:
        x, phi, p = _rk4_adjoint(kind, c, r, u, x, phi, p, last)
        ts[m - 1] = duration
        xs[m - 1] = x
        phis[m - 1] = phi
        ps[m - 1] = p
    return ts, xs, phis, ps


@njit(cache=True)
def day_time_to_level(kind, c, r, u, x0, level, duration, step, tol):
    """First time x crosses ``level`` within a light segment, or -1.

    The crossing step is refined by bisecting the length of a single RK4 step
    taken from the step's start, down to ``tol`` in time.
    """
    if x0 == level:
        return 0.0
    sign0 = x0 > level
    n, last = _steps(duration, step)
    rate = r + u
    x = x0
    t = 0.0
    for i in range(n + 1):
        h = step if i < n else last
        if h <= 0.0:
            break
        xn, _ = _rk4(kind, c, rate, u, x, h)
        if (xn > level) != sign0 or xn == level:
            lo = 0.0
            hi = h
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                xm, _ = _rk4(kind, c, rate, u, x, mid)
                if (xm > level) != sign0 or xm == level:
                    hi = mid
                else:
                    lo = mid
            return t + hi
        x = xn
        t += h
    return -1.0
