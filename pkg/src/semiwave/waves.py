"""Traveling-wave profiles: seeds, relaxation to a stationary state, residuals, alignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from . import evolve, spectral
from ._numerics import golden_min
from .errors import ConvergenceError, DomainError
from .grid import EDGE, Field, Grid, is_tail, tail_values

STATIONARY_TOL = 1e-7


@dataclass
class WaveProfile:
    samples: Field
    c: float
    lam1: float
    j_c: int
    amplitude: float
    orientation: str  # "left": phi -> 0 as z -> -inf ; "right": phi -> 0 as z -> +inf
    meta: dict = field(default_factory=dict)

    @property
    def z(self):
        return self.samples.grid.z

    @property
    def phi(self):
        return self.samples.values

    @property
    def grid(self):
        return self.samples.grid

    def __call__(self, z):
        """Cubic interpolant; outside the grid the fill rule is used."""
        z = np.asarray(z, dtype=float)
        zz, ph = self.z, self.phi
        out = CubicSpline(zz, ph)(np.clip(z, zz[0], zz[-1]))
        (fl, fr), = self.grid.boundary_fill
        for mask, edge_z, edge_v, fill in ((z < zz[0], zz[0], ph[0], fl), (z > zz[-1], zz[-1], ph[-1], fr)):
            if not np.any(mask):
                continue
            if fill == EDGE:
                out = np.where(mask, edge_v, out)
            elif is_tail(fill):
                out = np.where(mask, tail_values(fill, z), out)
            elif isinstance(fill, tuple):
                with np.errstate(over="ignore"):
                    ext = fill[2] + (edge_v - fill[2]) * np.exp(fill[1] * (z - edge_z))
                out = np.where(mask, ext, out)
            else:
                out = np.where(mask, fill, out)
        return out


def orientation_of(lam1):
    return "left" if lam1 > 0 else "right"


def seed_datum(c, lam1, j_c, A, grid: Grid, kappa, m, dt):
    """History constant in s: min(kappa, A |z|^j e^{lam1 z}), monotonized toward the plateau."""
    z = grid.z
    v = A * np.abs(z) ** j_c * np.exp(np.clip(lam1 * z, -700, 700))
    if j_c:
        # the polynomial factor only belongs on the decaying side
        zpk = -1.0 / lam1
        peak = A * abs(zpk) ** j_c * math.exp(lam1 * zpk)
        v = np.where(lam1 * (z - zpk) > 0, peak, v)
    v = np.minimum(kappa, v)
    v = np.maximum.accumulate(v) if lam1 > 0 else np.maximum.accumulate(v[::-1])[::-1]
    return evolve.DelayHistory.constant(grid, v, m, dt)


def scheme_char(frame, dz, support=(0.0,)):
    """Characteristic function of the second-order scheme, (lam, slope) -> value.

    Difference quotients replace derivatives and the sampled kernel replaces
    the mgf; slope is the linearization g'(u*) at the equilibrium of interest.
    """
    w, kmin = evolve.kernel_stencil(frame.kernel, (dz,), frame.c * frame.h, support_lams=support)
    offs = (np.arange(len(w)) + kmin[0]) * dz

    def f(lam, slope):
        lap = (2.0 * math.cosh(lam * dz) - 2.0) / dz ** 2
        drift = frame.c * math.sinh(lam * dz) / dz
        with np.errstate(over="ignore", invalid="ignore"):
            v = lap - drift - 1.0 + slope * float(np.sum(w * np.exp(-lam * offs)))
        return v if np.isfinite(v) else math.inf
    return f


def discrete_rate(frame, law, dz, lam):
    """Root of the scheme's characteristic function next to the continuous root lam (secant)."""
    E = scheme_char(frame, dz, (lam,))
    f = lambda x: E(x, law.gprime0)
    x0, x1 = lam, lam * (1.0 + 1e-3)
    f0, f1 = f(x0), f(x1)
    for _ in range(50):
        if f1 == f0:
            break
        x0, x1, f0 = x1, x1 - f1 * (x1 - x0) / (f1 - f0), f1
        f1 = f(x1)
        if abs(x1 - x0) < 1e-14 * abs(x1):
            break
    if not np.isfinite(x1) or abs(x1 - lam) > 0.2 * abs(lam):
        return lam
    return float(x1)


def scheme_critical(frame, law, dz, side=1, width=0.5):
    """Critical (speed, rate) of the scheme: E_c has a double real root of sign `side` at this dz.

    Returns (c, lam).  At coarse dz this differs from the continuous pair, and
    only the scheme's own pair gives neutral (gamma = 0) weighted dynamics.
    """
    f0 = frame.with_speed(0.0)
    c0 = spectral.critical_speeds(f0)[1 if side > 0 else 0]
    lam0 = spectral.leading_rate(spectral.char_roots(frame.with_speed(c0)))

    def side_min(c):
        fr = frame.with_speed(c)
        E = scheme_char(fr, dz, (lam0 / 3.0, 3.0 * lam0))
        a, b = sorted((lam0 / 3.0, 3.0 * lam0))
        return golden_min(lambda x: E(x, law.gprime0), a, b, tol=1e-12)

    # the side minimum decreases in c on the positive side, increases on the negative one
    sgn = 1.0 if side > 0 else -1.0
    F = lambda c: sgn * side_min(c)[1]
    lo, hi = c0 - width, c0 + width
    while F(lo) <= 0:
        lo -= width
    while F(hi) > 0:
        hi += width
    if sgn < 0:
        lo, hi = hi, lo
    c = brentq(lambda c: side_min(c)[1], min(lo, hi), max(lo, hi), xtol=1e-13)
    return float(c), float(side_min(c)[0])


def plateau_rate(frame, law, dz, side, span=20.0, n=4001):
    """Slowest real decay rate of the scheme's linearization at kappa toward the plateau end.

    side=+1: plateau at +inf (rate < 0); side=-1: plateau at -inf (rate > 0).
    Returns None when no real rate exists (oscillatory approach).
    """
    slope = float(law.derivative(law.kappa))
    E = scheme_char(frame, dz, (-side * span,))
    f = lambda x: E(x, slope)
    xs = -side * np.linspace(1e-9, span, n)
    vals = np.array([f(x) for x in xs])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(idx) == 0:
        return None
    i = idx[0]
    return float(brentq(f, xs[i], xs[i + 1], xtol=1e-15))


def tail_length(lam, j_c, amplitude, level, min_len=5.0):
    """Distance |z| at which amplitude |z|^j e^{-|lam| |z|} drops to level."""
    lam = abs(lam)
    x = max(min_len, math.log(amplitude / level) / lam)
    for _ in range(50):
        x = max(min_len, (math.log(amplitude / level) + j_c * math.log(x)) / lam)
    return x


def profile_grid(frame, law, roots, half_width=40.0, dz=0.05, amplitude=1.0, tail_floor=1e-10):
    """1D grid whose fills continue the front's asymptotics beyond both ends.

    At the zero end the ghost values are the prescribed tail
    amplitude |z|^j e^{rate z}, with the scheme's own decay rate, so the
    tail amplitude (and with it the translate of the front) is fixed.  That
    end is placed where the tail has dropped to tail_floor * kappa: a longer
    leading edge only amplifies rounding noise (perturbations grow like
    e^{lam |z|} on their way to the front).  At the plateau end the ghosts
    continue kappa - b e^{mu z} with the slowest real rate mu, or replicate
    the edge value when the approach to kappa is oscillatory.
    """
    lam = spectral.leading_rate(roots)
    rate = discrete_rate(frame, law, dz, lam) if roots.j_c == 0 else lam
    zero_fill = ("tail", rate, amplitude, roots.j_c, 0.0)
    side = 1 if lam > 0 else -1
    mu = plateau_rate(frame, law, dz, side)
    top_fill = EDGE if mu is None else ("exp", mu, law.kappa)
    lead = dz * math.ceil(tail_length(lam, roots.j_c, amplitude, tail_floor * law.kappa) / dz)
    back = dz * math.ceil(half_width / dz)
    if lam > 0:
        return Grid(((-lead, back),), (dz,), ((zero_fill, top_fill),))
    return Grid(((-back, lead),), (dz,), ((top_fill, zero_fill),))


def _stationary_residual(A, b, conv, u):
    return A @ u + b + conv(u)


def _banded_solve(M, rhs):
    M = M.tocoo()
    lo = int(max(0, (M.row - M.col).max()))
    up = int(max(0, (M.col - M.row).max()))
    ab = np.zeros((lo + up + 1, M.shape[0]))
    np.add.at(ab, (up + M.row - M.col, M.col), M.data)
    return solve_banded((lo, up), ab, rhs)


def _relax(frame, law, grid, u0, tol, max_iter, tau0=0.5, tau_max=1e8):
    """Pseudo-transient continuation on A u + b + K*g(u) = 0 (linearly implicit pseudo-time steps)."""
    A, b, _ = evolve.linear_operator(grid, frame.c, frame.nu)
    b = b.ravel()
    shift = frame.c * frame.h * np.asarray(frame.nu)
    w, kmin = evolve.kernel_stencil(frame.kernel, grid.spacing, shift)
    conv = evolve.Convolver(w, kmin, grid, law)
    I = sp.identity(A.shape[0], format="csr")
    u = np.array(u0, dtype=float)
    R = _stationary_residual(A, b, conv, u)
    r0 = rk = float(np.max(np.abs(R)))
    tau = tau0
    hist = [rk]
    for _ in range(max_iter):
        if rk < tol:
            break
        J = A + evolve.conv_jacobian(conv, u, law.derivative)
        du = _banded_solve(I / tau - J, R)
        u = u + du
        R = _stationary_residual(A, b, conv, u)
        rn = float(np.max(np.abs(R)))
        if not np.isfinite(rn):
            raise ConvergenceError("profile relaxation diverged", hist)
        tau = min(tau_max, tau * max(0.5, min(10.0, rk / rn)))
        rk = rn
        hist.append(rk)
    return u, hist, r0


def _verify_stationary(frame, law, grid, u, m, periods):
    """Run the delayed dynamics from the constant history u and record sup|u(t+h) - u(t)| per period."""
    dt = frame.h / m
    st = evolve.make_stepper(frame, law, evolve.DelayHistory.constant(grid, u, m, dt))
    diffs, prev = [], st.u.copy()
    for _ in range(periods):
        st.advance(m)
        diffs.append(float(np.max(np.abs(st.u - prev))))
        prev = st.u.copy()
    return st.u.copy(), diffs


def _level_crossing(z, phi, level, orientation):
    """First crossing of the level coming from the zero end (linear interpolation)."""
    if orientation == "right":
        zc = _level_crossing(-z[::-1], phi[::-1], level, "left")
        return -zc
    idx = np.nonzero(phi >= level)[0]
    if len(idx) == 0 or idx[0] == 0:
        raise DomainError("profile does not cross the requested level inside the grid")
    i = idx[0]
    t = (level - phi[i - 1]) / (phi[i] - phi[i - 1])
    return z[i - 1] + t * (z[i] - z[i - 1])


def tail_fit(z, phi, orientation, j_c=0, lo=1e-9, hi=1e-3, kappa=1.0):
    """Least-squares fit log(phi / |z|^j) = log A + lam z on the tail where phi/kappa in [lo, hi]."""
    mask = (phi > lo * kappa) & (phi < hi * kappa) & (np.abs(z) > 0)
    if orientation == "left":
        mask &= z < 0
    else:
        mask &= z > 0
    if mask.sum() < 5:
        return math.nan, math.nan
    zz = z[mask]
    y = np.log(phi[mask]) - j_c * np.log(np.abs(zz))
    slope, icpt = np.polyfit(zz, y, 1)
    return float(slope), float(math.exp(icpt))


def compute_profile(frame, law, half_width=40.0, dz=0.05, m=None, seed=None, amplitude=1.0,
                    tol=1e-10, max_iter=60, verify_periods=3, max_periods=2000,
                    tail_floor=1e-10, roots=None) -> WaveProfile:
    """Stationary wave profile in the moving frame.

    The seed is relaxed by linearly implicit pseudo-time steps of the
    non-delayed equation (it has the same stationary states), with the step
    growing as the residual falls, so the last iterations are Newton steps.
    The result is then checked under the delayed dynamics:
    sup|u(t+h) - u(t)| < 1e-7 for verify_periods consecutive periods.  If
    the relaxation stalls, plain delayed evolution from the seed continues
    up to max_periods.  Finally the grid is shifted so that phi(0) = kappa/2.
    """
    if frame.d != 1:
        raise DomainError("profiles are computed on a 1D grid along nu")
    roots = roots or spectral.char_roots(frame)
    lam = spectral.leading_rate(roots)
    kappa = law.kappa
    if not kappa:
        raise DomainError("birth law has no positive equilibrium")
    grid = profile_grid(frame, law, roots, half_width, dz, amplitude, tail_floor)
    m = m or evolve.default_m(frame.h, dz)
    dt = frame.h / m
    if seed is None:
        seed = seed_datum(frame.c, lam, roots.j_c, amplitude, grid, kappa, 1, dt).slots[-1]
    seed = np.asarray(seed, dtype=float)
    u, hist, _ = _relax(frame, law, grid, seed, tol, max_iter)
    meta = {"relax_history": hist, "m": m, "dt": dt, "method": "relaxation"}
    if hist[-1] < tol:
        u2, diffs = _verify_stationary(frame, law, grid, u, m, verify_periods)
    else:
        # slow path: plain evolution with stationarity monitoring
        meta["method"] = "evolution"
        st = evolve.make_stepper(frame, law, evolve.DelayHistory.constant(grid, seed, m, dt))
        diffs, prev, run = [], st.u.copy(), 0
        for _ in range(max_periods):
            st.advance(m)
            diffs.append(float(np.max(np.abs(st.u - prev))))
            prev = st.u.copy()
            run = run + 1 if diffs[-1] < STATIONARY_TOL else 0
            if run >= verify_periods:
                break
        u2 = st.u.copy()
    meta["stationarity"] = diffs
    if len(diffs) < verify_periods or not all(d < STATIONARY_TOL for d in diffs[-verify_periods:]):
        raise ConvergenceError("stationarity not reached", hist + diffs)
    orient = orientation_of(lam)
    z0 = _level_crossing(grid.z, u2, kappa / 2.0, orient)
    g2 = grid.shifted(-z0)
    tail = g2.boundary_fill[0][0 if orient == "left" else 1]
    amp = tail[2] * math.exp(-tail[1] * tail[4])
    slope, _ = tail_fit(g2.z, u2, orient, roots.j_c, kappa=kappa)
    meta.update(z_shift=z0, tail_rate_fit=slope, roots=roots)
    prof = WaveProfile(Field(g2, u2), frame.c, lam, roots.j_c, amp, orient, meta)
    prof.meta["residual"] = profile_residual(prof, frame, law)
    prof.meta["residual_scheme"] = profile_residual(prof, frame, law, order=2)
    return prof


# ---------------------------------------------------------------------------


def _derivs(u, dz, order, fill):
    """First and second differences on an extended vector (two ghost cells each side)."""
    if order == 2:
        d1 = (u[3:-1] - u[1:-3]) / (2 * dz)
        d2 = (u[3:-1] - 2 * u[2:-2] + u[1:-3]) / dz ** 2
    else:
        d1 = (-u[4:] + 8 * u[3:-1] - 8 * u[1:-3] + u[:-4]) / (12 * dz)
        d2 = (-u[4:] + 16 * u[3:-1] - 30 * u[2:-2] + 16 * u[1:-3] - u[:-4]) / (12 * dz ** 2)
    return d1, d2


def profile_residual(profile: WaveProfile, frame, law, order=4, exclude=2):
    """sup |phi'' - c phi' - phi + K*g(phi)(. - ch)| over the interior.

    order=4 uses fourth-order stencils, so the residual of a second-order
    solution measures its truncation error (O(dz^2)); order=2 is the
    scheme's own operator.  `exclude` cells are dropped at each end.
    """
    grid = profile.grid
    dz = grid.spacing[0]
    u = profile.phi
    ext = evolve.pad_field(u, [(2, 2)], grid)
    d1, d2 = _derivs(ext, dz, order, grid.boundary_fill)
    w, kmin = evolve.kernel_stencil(frame.kernel, grid.spacing, frame.c * frame.h)
    conv = evolve.Convolver(w, kmin, grid, law)(u)
    r = d2 - frame.c * d1 - u + conv
    if exclude:
        r = r[exclude:-exclude]
    return float(np.max(np.abs(r))) if r.size else 0.0


def align(profile_a: WaveProfile, profile_b: WaveProfile, search=None):
    """Shift s minimizing sup_z |a(z + s) - b(z)| on the common grid window; returns (s, distance)."""
    za, zb = profile_a.z, profile_b.z
    ka = profile_a.phi.max()
    level = 0.5 * min(ka, profile_b.phi.max())
    orient = profile_a.orientation
    s0 = _level_crossing(za, profile_a.phi, level, orient) - _level_crossing(zb, profile_b.phi, level, orient)
    fa = CubicSpline(za, profile_a.phi)
    dz = max(profile_a.grid.spacing[0], profile_b.grid.spacing[0])
    width = search if search is not None else 2.0 * dz

    def dist(s):
        lo, hi = max(za[0] - s, zb[0]), min(za[-1] - s, zb[-1])
        mask = (zb >= lo) & (zb <= hi)
        return float(np.max(np.abs(fa(zb[mask] + s) - profile_b.phi[mask])))

    s, d = golden_min(dist, s0 - width, s0 + width, tol=1e-12)
    return float(s), float(d)


def classify(profile: WaveProfile, law, window=0.2, band_tol=1e-4):
    """monotone_front, oscillatory_front or semi_wavefront from the far (plateau) end of the grid."""
    phi = profile.phi
    kappa = law.kappa
    dphi = np.diff(phi)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(phi))))
    if np.all(dphi >= -tol) or np.all(dphi <= tol):
        return "monotone_front"
    n = len(phi)
    k = max(3, int(round(window * n)))
    far = phi[-k:] if profile.orientation == "left" else phi[:k][::-1]
    # oscillation band over the first and second halves of the trailing window
    half = len(far) // 2
    near_band = np.ptp(far[:half])
    end_band = np.ptp(far[half:])
    dev = far - kappa
    crossings = int(np.sum(np.sign(dev[:-1]) * np.sign(dev[1:]) < 0))
    if end_band < band_tol or (end_band < near_band and abs(far[-1] - kappa) < band_tol):
        return "oscillatory_front" if crossings > 0 or np.any(phi > kappa + band_tol) else "monotone_front"
    return "semi_wavefront"


def liminf_limsup(profile: WaveProfile, window=0.2):
    phi = profile.phi
    k = max(3, int(round(window * len(phi))))
    far = phi[-k:] if profile.orientation == "left" else phi[:k]
    return float(far.min()), float(far.max())


def embed_profile(profile: WaveProfile, lo, hi, transverse=None) -> Field:
    """Profile sampled on a wider grid that shares its nodes and fills.

    The new extent is [lo, hi] rounded outward to the profile's node lattice;
    values outside the profile grid come from its fill rules.  With
    transverse = (ylo, yhi, dy) the result is the planar front on a 2D grid
    (edge-replicated across the second axis).
    """
    z, dz = profile.z, profile.grid.spacing[0]
    klo = max(0, int(math.ceil((z[0] - lo) / dz - 1e-9)))
    khi = max(0, int(math.ceil((hi - z[-1]) / dz - 1e-9)))
    a, b = z[0] - klo * dz, z[-1] + khi * dz
    fill = profile.grid.boundary_fill[0]
    g1 = Grid(((a, b),), (dz,), (fill,))
    vals = profile(g1.z)
    vals[klo:klo + len(z)] = profile.phi
    if transverse is None:
        return Field(g1, vals)
    ylo, yhi, dy = transverse
    g2 = Grid(((a, b), (ylo, yhi)), (dz, dy), (fill, (EDGE, EDGE)))
    return Field(g2, np.repeat(vals[:, None], g2.shape[1], axis=1))
