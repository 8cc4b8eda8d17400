"""Characteristic-equation analysis in the moving frame.

Notation: p(lam) = |lam|^2 - c nu.lam - 1,
q(lam) = Lip(g) e^{-lam.nu c h} M(lam) with M the kernel mgf,
E_c(lam) = lam^2 - c lam - 1 + g'(0) e^{-lam c h} M(lam nu)   (lam along nu).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import kernels
from ._numerics import bisect_increasing, golden_min, increasing_root
from .birth_laws import BirthLaw
from .errors import DomainError, LevelError, NotInSpeedSetError, ScanRangeError

MERGE_RTOL = 1e-6
TANGENCY_TOL = 1e-10


@dataclass(frozen=True)
class FrameSpec:
    d: int
    c: float
    h: float
    kernel: kernels.Kernel
    law: BirthLaw
    nu: tuple = None

    def __post_init__(self):
        errs = []
        if self.d not in (1, 2):
            errs.append("frame.d: must be 1 or 2")
        if not self.h > 0:
            errs.append("frame.h: delay must be positive")
        nu = self.nu if self.nu is not None else (1.0,) + (0.0,) * (self.d - 1)
        nu = tuple(float(v) for v in np.atleast_1d(nu))
        if len(nu) != self.d or abs(math.hypot(*nu) - 1.0) > 1e-12:
            errs.append("frame.nu: must be a unit vector of length d")
        if self.kernel.dim != self.d:
            errs.append(f"frame.kernel: dimension {self.kernel.dim} != d={self.d}")
        if errs:
            raise DomainError("; ".join(errs))
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "h", float(self.h))

    def with_speed(self, c):
        return replace(self, c=float(c))

    @property
    def gprime0(self):
        return self.law.gprime0

    @property
    def lip(self):
        return self.law.lip


@dataclass(frozen=True)
class RootReport:
    lam1: float
    lam2: Optional[float]
    j_c: int
    boundary_warning: bool = False


@dataclass(frozen=True)
class SpectralReport:
    lam: object
    p_lambda: float
    q_lambda: float
    E_value: float
    gamma_lambda: float
    eps_h: float
    A_lambda: float
    roots: Optional[RootReport] = None
    critical_speeds: Optional[tuple] = None

    def as_dict(self):
        out = {"lambda": self.lam, "p_lambda": self.p_lambda, "q_lambda": self.q_lambda,
               "E_value": self.E_value, "gamma_lambda": self.gamma_lambda,
               "eps_h": self.eps_h, "A_lambda": self.A_lambda}
        if self.roots is not None:
            out.update(lambda_1=self.roots.lam1, lambda_2=self.roots.lam2, j_c=self.roots.j_c)
        if self.critical_speeds is not None:
            out.update(c_star_minus=self.critical_speeds[0], c_star_plus=self.critical_speeds[1])
        return out


# ---------------------------------------------------------------------------


def _vec(frame, lam):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.size == 1 and frame.d > 1:
        lam = lam[0] * np.asarray(frame.nu)
    if lam.size != frame.d:
        raise DomainError(f"lambda must be a scalar or a {frame.d}-vector")
    return lam


def _log_mgf(frame, lamv):
    return kernels.log_mgf(frame.kernel, lamv if frame.d > 1 else float(lamv[0]))


def pq(frame: FrameSpec, lam):
    lv = _vec(frame, lam)
    s = float(np.dot(lv, frame.nu))
    p = float(np.dot(lv, lv)) - frame.c * s - 1.0
    q = frame.lip * math.exp(-s * frame.c * frame.h + _log_mgf(frame, lv))
    return p, q


def char_eval(frame: FrameSpec, lam, c=None):
    c = frame.c if c is None else c
    lam = float(lam)
    lm = _log_mgf(frame, _vec(frame, lam))
    return lam * lam - c * lam - 1.0 + frame.gprime0 * math.exp(min(-lam * c * frame.h + lm, 700.0))


def admissible_window(frame: FrameSpec):
    """Real lambda along nu for which the kernel mgf is finite."""
    k = frame.kernel
    if frame.d == 1:
        return k.window()
    lo, hi = -math.inf, math.inf
    for ki, ni in zip(k.factors, frame.nu):
        if ni == 0:
            continue
        a, b = ki.window()
        a, b = sorted((a / ni, b / ni))
        lo, hi = max(lo, a), min(hi, b)
    return lo, hi


def _search_window(frame, c):
    r = math.sqrt(c * c + 4.0)
    lo, hi = (c - r) / 2.0, (c + r) / 2.0
    wlo, whi = admissible_window(frame)
    shrink = 1e-9 * (1.0 + abs(wlo) if np.isfinite(wlo) else 0.0)
    lo = max(lo, wlo + shrink) if np.isfinite(wlo) else lo
    shrink = 1e-9 * (1.0 + abs(whi) if np.isfinite(whi) else 0.0)
    hi = min(hi, whi - shrink) if np.isfinite(whi) else hi
    return lo, hi


def char_roots(frame: FrameSpec) -> RootReport:
    """Real zeros of E_c (at most two; E_c is convex)."""
    c = frame.c
    lo, hi = _search_window(frame, c)
    E = lambda x: char_eval(frame, x)
    xs = np.linspace(lo, hi, 10001)
    vals = np.array([E(x) for x in xs])
    sign_changes = int(np.sum(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0))
    if sign_changes > 2:
        raise DomainError(f"E_c has {sign_changes} sign changes; convexity violated")
    i = int(np.argmin(vals))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    xm, em = golden_min(E, a, b, tol=1e-13)
    if em > TANGENCY_TOL:
        raise NotInSpeedSetError(f"c={c} lies in the critical gap: min E_c = {em:.3e} > 0")
    if em >= -TANGENCY_TOL:
        r = RootReport(float(xm), float(xm), 1)
    else:
        warn = False
        if E(lo) < 0:
            warn, l1 = True, lo
        else:
            l1 = bisect_increasing(lambda x: -E(x), lo, xm)
        if E(hi) < 0:
            warn, l2 = True, hi
        else:
            l2 = bisect_increasing(E, xm, hi)
        if warn:
            warnings.warn("characteristic root at the admissibility boundary", RuntimeWarning)
        j = 1 if abs(l2 - l1) < MERGE_RTOL * (1.0 + abs(l1)) else 0
        r = RootReport(float(l1), float(l2), j, warn)
    if not (r.lam1 > 0 and r.lam2 > 0) and not (r.lam1 < 0 and r.lam2 < 0):
        raise DomainError("characteristic roots of mixed sign; E_c(0) must be positive")
    return r


def leading_rate(roots: RootReport):
    """Slowest decay rate toward the zero state: lam1 if positive, lam2 if negative."""
    return roots.lam1 if roots.lam1 > 0 else roots.lam2


def _side_min(frame, c, side):
    lo, hi = _search_window(frame, c)
    if side > 0:
        a, b = max(lo, 0.0), hi
    else:
        a, b = lo, min(hi, 0.0)
    if b <= a:
        return math.inf
    return golden_min(lambda x: char_eval(frame, x, c), a, b, tol=1e-12)[1]


def critical_speeds(frame: FrameSpec, bounds=(-50.0, 50.0), ctol=1e-13):
    """(c*-, c*+): boundary speeds of the gap where E_c > 0 everywhere."""
    e0 = frame.gprime0 * frame.kernel.mass - 1.0
    if not e0 > 0:
        raise DomainError(f"critical speeds need E_c(0) = g'(0)*mass - 1 > 0, got {e0:.3g}")
    out = []
    for side in (-1, 1):
        lo, hi = bounds
        for _ in range(4):
            # F+ decreases in c; F- increases in c
            f_lo, f_hi = _side_min(frame, lo, side), _side_min(frame, hi, side)
            ok = (f_hi <= 0 < f_lo) if side > 0 else (f_lo <= 0 < f_hi)
            if ok:
                break
            lo, hi = 2 * lo, 2 * hi
        else:
            raise ScanRangeError(f"no critical speed on side {side:+d} within [{lo}, {hi}]")
        while hi - lo > ctol * (1.0 + abs(lo) + abs(hi)):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            fm = _side_min(frame, mid, side)
            if (fm <= 0) == (side > 0):
                hi = mid
            else:
                lo = mid
        out.append(hi if side > 0 else lo)
    return out[0], out[1]


def speed_sign_map(frame: FrameSpec, cs, n_lam=2001):
    """Brute-force table: for each c, whether E_c has a zero on lam<0 / lam>0."""
    rows = []
    for c in cs:
        lo, hi = _search_window(frame, c)
        lam = np.linspace(lo, hi, n_lam)
        e = np.array([char_eval(frame, x, c) for x in lam])
        rows.append((float(c), bool(np.any(e[lam < 0] <= 0)), bool(np.any(e[lam > 0] <= 0))))
    return rows


def gamma_lambda(frame: FrameSpec, lam):
    p, q = pq(frame, lam)
    return _gamma_from(p, q, frame.h)


def _gamma_from(p, q, h):
    f = lambda g: g + p + q * math.exp(min(h * g, 700.0))
    lo = -p - q * math.exp(min(-h * p, 700.0))
    if f(lo) <= 0 and math.isfinite(lo):
        return bisect_increasing(f, lo, -p)
    return increasing_root(f, guess=-p, step=1.0)


def eps_h(frame: FrameSpec, lam):
    p, q = pq(frame, lam)
    g = _gamma_from(p, q, frame.h)
    return 1.0 / (1.0 + frame.h * q * math.exp(frame.h * g))


def a_lambda(frame: FrameSpec, lam):
    return (1.0 / (4.0 * math.pi * eps_h(frame, lam))) ** (frame.d / 2.0)


def q_hat(frame: FrameSpec, lam, zeta):
    lv = _vec(frame, lam)
    s = float(np.dot(lv, frame.nu))
    z = np.atleast_1d(np.asarray(zeta, dtype=float))
    w = kernels.weighted_fourier_magnitude(frame.kernel, lv if frame.d > 1 else s,
                                           z if frame.d > 1 else float(z[0]))
    return frame.lip * math.exp(-s * frame.c * frame.h) * (2 * math.pi) ** frame.d * w


def l_lambda(frame: FrameSpec, lam, zeta):
    """Root of l + |zeta|^2 - p - qhat(zeta) e^{-h l} = 0."""
    p, _ = pq(frame, lam)
    z2 = float(np.sum(np.asarray(zeta, dtype=float) ** 2))
    qh = q_hat(frame, lam, zeta)
    h = frame.h
    l0 = p - z2
    if qh == 0.0:
        return l0
    f = lambda l: l + z2 - p - qh * math.exp(min(-h * l, 700.0))
    if f(l0) >= 0:
        # qhat e^{-h l0} is below the rounding of l0 + |zeta|^2 - p
        return l0
    step = qh * math.exp(min(-h * l0, 700.0))
    hi = l0 + step
    if math.isfinite(hi) and f(hi) >= 0:
        return bisect_increasing(f, l0, hi)
    return increasing_root(f, guess=l0, step=1.0)


def loge_bounds(frame: FrameSpec, lam, zeta):
    """(lower, upper) of the sandwich -eps|zeta|^2 - gamma <= l <= -log(1+h eps |zeta|^2)/h - gamma."""
    g = gamma_lambda(frame, lam)
    e = eps_h(frame, lam)
    z2 = float(np.sum(np.asarray(zeta, dtype=float) ** 2))
    return -e * z2 - g, -math.log1p(frame.h * e * z2) / frame.h - g


def spectral_report(frame: FrameSpec, lam, roots=False, speeds=False) -> SpectralReport:
    p, q = pq(frame, lam)
    g = _gamma_from(p, q, frame.h)
    e = 1.0 / (1.0 + frame.h * q * math.exp(frame.h * g))
    A = (1.0 / (4.0 * math.pi * e)) ** (frame.d / 2.0)
    lam_s = float(np.dot(_vec(frame, lam), frame.nu))
    E = char_eval(frame, lam_s)
    rr = char_roots(frame) if roots else None
    cs = critical_speeds(frame) if speeds else None
    lam_out = float(lam) if np.ndim(lam) == 0 else tuple(float(v) for v in lam)
    return SpectralReport(lam_out, p, q, E, g, e, A, rr, cs)


# ---------------------------------------------------------------------------
# theorem-specific constants


def gamma_star(rho, h, gamma_cap=math.inf):
    """Largest gamma in (0, min(cap, 1)) with rho e^{gamma h} <= (1 - gamma)(1 - 1e-9)."""
    if rho >= 1 or gamma_cap <= 0:
        return None
    top = min(gamma_cap, 1.0)
    f = lambda g: rho * math.exp(g * h) - (1.0 - g) * (1.0 - 1e-9)
    if f(top) <= 0:
        return top
    if f(0.0) > 0:
        return None
    lo, hi = 0.0, top
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def _delta_ineq(delta, rho, h, d, t):
    s = t + delta
    return rho * (s / (s - h)) ** (d / 2.0) + d / (2.0 * s)


def delta_star(rho_eps, h, d, grid_step=1e-3, verify_points=2001):
    """Smallest delta > 1 + h (on a grid, then bisected) with the decay inequality for all t >= -h."""
    if rho_eps >= 1:
        raise DomainError(f"delta_star needs rho_eps < 1, got {rho_eps}")
    start = max(1.0 + h, 2.0 * h) + grid_step
    ok = lambda dl: _delta_ineq(dl, rho_eps, h, d, -h) < 1.0
    if ok(start):
        best = start
    else:
        k0, found = 0, None
        while found is None:
            ks = k0 + np.arange(100000)
            grid = start + grid_step * ks
            s = grid - h
            vals = rho_eps * (s / (s - h)) ** (d / 2.0) + d / (2.0 * s)
            idx = np.nonzero(vals < 1.0)[0]
            if len(idx):
                found = grid[idx[0]]
            k0 += 100000
            if k0 > 10 ** 9:
                raise DomainError("delta_star search diverged")
        lo, hi = found - grid_step, found
        while hi - lo > 1e-12 * hi:
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
        best = hi
    t = -h + np.concatenate(([0.0], np.geomspace(1e-6, 1e6, verify_points)))
    if not np.all(_delta_ineq(best, rho_eps, h, d, t) < 1.0):
        raise DomainError("delta_star failed verification on the t-grid")
    return float(best)


def b_gamma(profile_meta: dict, frame: FrameSpec, gamma):
    """Offset b solving g'(0) * (kernel tail beyond b - z -ch) = gamma e^{-gamma h}."""
    k = frame.kernel if frame.d == 1 else frame.kernel.marginal(0)
    level = gamma * math.exp(-gamma * frame.h) / frame.gprime0
    ch = frame.c * frame.h
    if "z_plus" in profile_meta:
        side, z0 = "right", float(profile_meta["z_plus"])
    elif "z_minus" in profile_meta:
        side, z0 = "left", float(profile_meta["z_minus"])
    else:
        raise DomainError("profile_meta needs z_plus or z_minus")
    if not (0 <= level < k.mass):
        raise LevelError(f"tail level {level} not attainable (kernel mass {k.mass})")
    lo_s, hi_s = k.support(0.0, 1e-300)
    width = max(hi_s - lo_s, 1.0)
    lo, hi = lo_s - width, hi_s + width
    if level == 0.0:
        if k.tail(hi_s, side) == 0.0 and k.tail(lo_s, "left" if side == "right" else "right") >= 0:
            a = hi_s if side == "right" else lo_s
            return a + z0 + ch
        raise LevelError("zero tail level is unattainable for a kernel without compact support")
    # tail_right decreasing in a, tail_left increasing
    sgn = -1.0 if side == "right" else 1.0
    f = lambda a: sgn * (k.tail(a, side) - level)
    while f(lo) > 0:
        lo -= width
    while f(hi) < 0:
        hi += width
    a = bisect_increasing(f, lo, hi)
    return a + z0 + ch
