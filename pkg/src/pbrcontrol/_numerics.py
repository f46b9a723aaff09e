"""Small root-finding helpers used where closed forms are unavailable."""

from __future__ import annotations

from typing import Callable

RTOL = 1e-12
ATOL = 1e-14
MAXITER = 200


def bisect(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    rtol: float = RTOL,
    atol: float = ATOL,
    maxiter: int = MAXITER,
) -> float:
    """Root of ``g`` in ``[lo, hi]`` by plain bisection.

    ``g(lo)`` and ``g(hi)`` must have opposite signs (zero at an end point is
    accepted and returned). Stops when the bracket width drops below
    ``atol + rtol * |mid|`` or after ``maxiter`` halvings.
    """
    glo = g(lo)
    if glo == 0.0:
        return lo
    ghi = g(hi)
    if ghi == 0.0:
        return hi
    if (glo > 0.0) == (ghi > 0.0):
        raise ValueError(f"root not bracketed: g({lo})={glo}, g({hi})={ghi}")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= atol + rtol * abs(mid):
            return mid
        gmid = g(mid)
        if gmid == 0.0:
            return mid
        if (gmid > 0.0) == (glo > 0.0):
            lo, glo = mid, gmid
        else:
            hi = mid
    return 0.5 * (lo + hi)
