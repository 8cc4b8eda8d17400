"""Small root-finding and minimization helpers shared by the modules."""

from __future__ import annotations

import math

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def bisect_increasing(f, lo, hi, xtol=0.0, maxiter=400):
    """Root of an increasing function on [lo, hi] with f(lo) <= 0 <= f(hi).

    Runs until the bracket cannot be split any further in floating point
    (or is narrower than xtol) and returns the endpoint with smaller |f|.
    """
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise ValueError(f"root not bracketed: f({lo})={flo}, f({hi})={fhi}")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= xtol:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if fm < 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return lo if abs(flo) <= abs(fhi) else hi


def increasing_root(f, guess=0.0, step=1.0, xtol=0.0):
    """Root of a strictly increasing map on the whole line, bracket found by doubling."""
    lo, hi = guess - step, guess + step
    k = 0
    while f(lo) > 0:
        lo = guess - step * 2.0 ** k
        k += 1
        if k > 200:
            raise ArithmeticError("no lower bracket")
    k = 0
    while f(hi) < 0:
        hi = guess + step * 2.0 ** k
        k += 1
        if k > 200:
            raise ArithmeticError("no upper bracket")
    return bisect_increasing(f, lo, hi, xtol=xtol)


def golden_min(f, a, b, tol=1e-10, maxiter=500):
    """Golden-section search for the minimum of a unimodal f on [a, b].

    Returns (x, f(x)); the endpoints are compared as well so monotone
    functions return the boundary minimizer.
    """
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)) * 0.5:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
    x, fx = (c, fc) if fc <= fd else (d, fd)
    for e in (a, b):
        fe = f(e)
        if fe < fx:
            x, fx = e, fe
    return x, fx
