"""Time integration of the delayed non-local equation in the moving frame.

u_t = Δu - c nu.∇u - u + K*[g(u)](t-h, z - c h nu)

Scheme: Crank-Nicolson for the linear part A = Δ_h - c nu.D_h - I (second
order central differences), trapezoid rule for the delayed term using the
history slots n-m and n+1-m (so Δt = h/m and no interpolation is needed).
The convolution is a linear FFT convolution on the grid padded with the
boundary fill values.  The shift c h nu is folded into the sampled kernel.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import fft as sfft
from scipy.sparse.linalg import splu

from .errors import ConfigError, CoverageError, InstabilityError
from .grid import EDGE, Field, Grid, is_tail, tail_values

BLOWUP = 1e6


def default_m(h, dz):
    """Smallest m with h/m <= min(dz^2/4, h/20)."""
    dt_max = min(dz * dz / 4.0, h / 20.0)
    return int(math.ceil(h / dt_max - 1e-9))


@dataclass
class DelayHistory:
    """m+1 states at t-h, t-h+dt, ..., t (oldest first)."""

    grid: Grid
    slots: list
    dt: float
    t: float = 0.0

    def __post_init__(self):
        if len(self.slots) < 2:
            raise ConfigError("history needs at least two slots (m >= 1)")
        self.slots = [np.asarray(s, dtype=float) for s in self.slots]
        for s in self.slots:
            if s.shape != self.grid.shape:
                raise ConfigError("history slot shape does not match grid")

    @property
    def m(self):
        return len(self.slots) - 1

    @property
    def h(self):
        return self.m * self.dt

    @classmethod
    def constant(cls, grid, values, m, dt, t=0.0):
        v = np.broadcast_to(np.asarray(values, dtype=float), grid.shape).copy()
        return cls(grid, [v.copy() for _ in range(m + 1)], dt, t)

    @classmethod
    def from_function(cls, grid, fn, m, dt, t=0.0):
        """fn(s, *coords) for s in [-h, 0]."""
        coords = grid.mesh()
        slots = [np.asarray(fn(t - (m - k) * dt, *coords), dtype=float) * np.ones(grid.shape)
                 for k in range(m + 1)]
        return cls(grid, slots, dt, t)

    def current(self):
        return Field(self.grid, self.slots[-1])

    def map(self, fn):
        return DelayHistory(self.grid, [fn(s) for s in self.slots], self.dt, self.t)


@dataclass
class Trajectory:
    times: np.ndarray
    probes: dict
    fields: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory sample times must increase strictly")

    def series(self, name):
        return self.times, np.asarray(self.probes[name])


# ---------------------------------------------------------------------------
# kernel stencils and convolution


def kernel_stencil(kernel, spacing, shift, lam=None, factor=1.0, support_lams=(), tol=1e-14):
    """Quadrature weights w[k] ~ K(k dz - shift) dz, with 0 among the offsets.

    The samples of each 1D factor are renormalized to reproduce its mass.
    With lam given, w[k] is multiplied by e^{-lam.k dz} (exponentially
    weighted kernel of the conjugated equation).  Returns (weights, kmin).
    """
    d = len(spacing)
    factors = kernel.factors if d > 1 else (kernel,)
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (d,))
    lams = [np.zeros(d)] + [np.broadcast_to(np.asarray(l, dtype=float), (d,)) for l in support_lams]
    if lam is not None:
        lams.append(np.broadcast_to(np.asarray(lam, dtype=float), (d,)))
    w, kmins = None, []
    for i, (k, dz) in enumerate(zip(factors, spacing)):
        lo, hi = math.inf, -math.inf
        for lv in lams:
            a, b = k.support(float(lv[i]), tol)
            lo, hi = min(lo, a), max(hi, b)
        kmin = min(0, int(math.floor((lo + shift[i]) / dz)))
        kmax = max(0, int(math.ceil((hi + shift[i]) / dz)))
        offs = np.arange(kmin, kmax + 1)
        vals = np.asarray(k.density(offs * dz - shift[i]), dtype=float)
        vals = vals * (k.mass / (vals.sum() * dz)) * dz
        if lam is not None:
            lv = float(np.broadcast_to(np.asarray(lam, dtype=float), (d,))[i])
            vals = vals * np.exp(-lv * offs * dz)
        kmins.append(kmin)
        w = vals if w is None else np.multiply.outer(w, vals)
    return w * factor, tuple(kmins)


def _ghosts(edge, n, dz, fill, outward, z_edge):
    """Ghost layers beyond one edge, ordered outward (first = adjacent to the grid)."""
    k = np.arange(1, n + 1).reshape((n,) + (1,) * edge.ndim)
    if fill == EDGE:
        return np.broadcast_to(edge, (n,) + edge.shape)
    if is_tail(fill):
        return np.broadcast_to(tail_values(fill, z_edge + outward * k * dz), (n,) + edge.shape)
    if isinstance(fill, tuple):
        return fill[2] + (edge[None] - fill[2]) * np.exp(fill[1] * outward * k * dz)
    return np.full((n,) + edge.shape, fill)


def pad_field(u, pads, grid):
    """Extend u by pads[i] = (left, right) ghost layers per axis using the grid's fill rules."""
    out = u
    for ax, ((a, b), (fl, fr), dz) in enumerate(zip(pads, grid.boundary_fill, grid.spacing)):
        lo, hi = grid.extent[ax]
        v = np.moveaxis(out, ax, 0)
        parts = []
        if a:
            parts.append(_ghosts(v[0], a, dz, fl, -1.0, lo)[::-1])
        parts.append(v)
        if b:
            parts.append(_ghosts(v[-1], b, dz, fr, 1.0, hi))
        out = np.moveaxis(np.concatenate(parts, axis=0), 0, ax) if len(parts) > 1 else out
    return out


class Convolver:
    """C[j] = sum_k w[k] F(u)[j - k - kmin], u extended beyond the grid by its fills.

    method "fft" uses a zero-padded real FFT; "direct" sums the stencil
    explicitly (separably for tensor stencils).  Direct sums keep relative
    accuracy in exponentially small tails, where FFT rounding (absolute,
    about 1e-16 max|F(u)|) would dominate weighted norms.
    """

    def __init__(self, weights, kmin, grid, F=None, method="fft"):
        if method not in ("fft", "direct"):
            raise ConfigError(f"unknown convolution method {method!r}")
        self.w = np.asarray(weights, dtype=float)
        self.kmin = tuple(kmin)
        self.grid = grid
        self.shape = grid.shape
        self.F = F if F is not None else (lambda u: u)
        self.method = method
        nk = self.w.shape
        self.pads = [(km + n - 1, -km) for km, n in zip(self.kmin, nk)]
        if method == "fft":
            padded = [s + a + b for s, (a, b) in zip(self.shape, self.pads)]
            self.L = [sfft.next_fast_len(n, real=True) for n in padded]
            self.what = sfft.rfftn(self.w, s=self.L)
        self.factors = self._separate()

    def _separate(self):
        if self.w.ndim == 1:
            return [self.w]
        a = self.w.sum(axis=1)
        b = self.w.sum(axis=0) / self.w.sum()
        if np.max(np.abs(np.multiply.outer(a, b) - self.w)) <= 1e-13 * np.max(np.abs(self.w)):
            return [a, b]
        return None

    def pad(self, u):
        return self.F(pad_field(u, self.pads, self.grid))

    def __call__(self, u):
        if self.method == "direct":
            return self.direct(u)
        P = self.pad(u)
        full = sfft.irfftn(sfft.rfftn(P, s=self.L) * self.what, s=self.L)
        sl = tuple(slice(n - 1, n - 1 + s) for n, s in zip(self.w.shape, self.shape))
        return full[sl]

    def direct(self, u):
        """Quadrature sum in physical space."""
        P = self.pad(u)
        if self.factors is not None:
            out = P
            for ax, f in enumerate(self.factors):
                out = np.apply_along_axis(np.convolve, ax, out, f, mode="valid")
            return out
        out = np.zeros(self.shape)
        nk = self.w.shape
        for k0 in range(nk[0]):
            for k1 in range(nk[1]):
                out += self.w[k0, k1] * P[nk[0] - 1 - k0: nk[0] - 1 - k0 + self.shape[0],
                                          nk[1] - 1 - k1: nk[1] - 1 - k1 + self.shape[1]]
        return out


# ---------------------------------------------------------------------------
# linear operator


def _axis_matrix(n, dz, drift, weight, fill, extent=(0.0, 0.0)):
    """1D part of A along one axis plus the boundary vector of the fills."""
    aL = (1.0 / dz ** 2 - drift / (2 * dz)) * math.exp(-weight * dz)
    aR = (1.0 / dz ** 2 + drift / (2 * dz)) * math.exp(weight * dz)
    a0 = -2.0 / dz ** 2
    diag = np.full(n, a0)
    bl, br = 0.0, 0.0
    fl, fr = fill
    if fl == EDGE:
        diag[0] += aL
    elif is_tail(fl):
        bl = aL * float(tail_values(fl, extent[0] - dz))
    elif isinstance(fl, tuple):
        e = math.exp(-fl[1] * dz)
        diag[0] += aL * e
        bl = aL * fl[2] * (1.0 - e)
    else:
        bl = aL * fl
    if fr == EDGE:
        diag[-1] += aR
    elif is_tail(fr):
        br = aR * float(tail_values(fr, extent[1] + dz))
    elif isinstance(fr, tuple):
        e = math.exp(fr[1] * dz)
        diag[-1] += aR * e
        br = aR * fr[2] * (1.0 - e)
    else:
        br = aR * fr
    M = sp.diags([np.full(n - 1, aL), diag, np.full(n - 1, aR)], [-1, 0, 1], format="csr")
    b = np.zeros(n)
    b[0] += bl
    b[-1] += br
    return M, b, (aL, a0, aR)


def linear_operator(grid, c, nu, weight=None):
    """Sparse A = Δ_h - c nu.D_h - I (conjugated by e^{weight.z} if given) and its fill vector."""
    d = grid.d
    wv = np.zeros(d) if weight is None else np.broadcast_to(np.asarray(weight, dtype=float), (d,))
    shape = grid.shape
    mats, bs, coefs = [], [], []
    for i in range(d):
        M, b, cf = _axis_matrix(shape[i], grid.spacing[i], -c * nu[i], float(wv[i]), grid.boundary_fill[i],
                                grid.extent[i])
        mats.append(M)
        bs.append(b)
        coefs.append(cf)
    N = int(np.prod(shape))
    A = -sp.identity(N, format="csr")
    bvec = np.zeros(shape)
    for i in range(d):
        op = sp.identity(1, format="csr")
        for j in range(d):
            op = sp.kron(op, mats[i] if j == i else sp.identity(shape[j], format="csr"), format="csr")
        A = A + op
        sh = [1] * d
        sh[i] = shape[i]
        bvec = bvec + bs[i].reshape(sh)
    return A.tocsr(), bvec, coefs


# ---------------------------------------------------------------------------
# stepper


class Stepper:
    """One delayed non-local evolution owning its state."""

    def __init__(self, grid, c, nu, history, conv, weight=None):
        self.grid = grid
        self.c = float(c)
        self.nu = tuple(nu)
        self.dt = float(history.dt)
        self.m = history.m
        self.hist = deque(np.array(s, dtype=float, copy=True) for s in history.slots)
        self.t = float(history.t)
        self.conv = conv
        A, b, coefs = linear_operator(grid, self.c, self.nu, weight)
        N = A.shape[0]
        I = sp.identity(N, format="csc")
        half = 0.5 * self.dt
        self.A = A
        self.P = (I + half * A).tocsr()
        self.lu = splu((I - half * A).tocsc())
        self.b = b.ravel()
        self.coefs = coefs
        self.c_old = self._conv(self.hist[0])
        self.min_value = min(float(np.min(s)) for s in self.hist)
        self.steps = 0

    def _conv(self, u):
        return self.conv(u).ravel()

    @property
    def u(self):
        return self.hist[-1]

    def delayed(self):
        return self.hist[0]

    def step(self):
        u = self.hist[-1].ravel()
        c_new = self._conv(self.hist[1])
        rhs = self.P @ u + self.dt * self.b + (0.5 * self.dt) * (self.c_old + c_new)
        un = self.lu.solve(rhs)
        amax = float(np.max(np.abs(un)))
        if not (amax <= BLOWUP):
            dz = min(self.grid.spacing)
            raise InstabilityError(
                f"solution exceeded {BLOWUP:g} at t={self.t + self.dt:.6g}",
                {"t": self.t + self.dt, "dt": self.dt, "dt_over_dz2": self.dt / dz ** 2,
                 "cell_peclet": abs(self.c) * dz / 2.0, "max_abs": amax})
        un = un.reshape(self.grid.shape)
        self.min_value = min(self.min_value, float(un.min()))
        self.hist.append(un)
        self.hist.popleft()
        self.c_old = c_new
        self.t += self.dt
        self.steps += 1
        return un

    def advance(self, n):
        for _ in range(n):
            self.step()
        return self.u

    def history(self):
        return DelayHistory(self.grid, [s.copy() for s in self.hist], self.dt, self.t)


def _check_frame_grid(frame, history):
    h = history.h
    if abs(h - frame.h) > 1e-12 * max(1.0, frame.h):
        raise ConfigError(f"delay h={frame.h} is not m*dt = {history.m}*{history.dt}")
    if history.grid.d != frame.d:
        raise ConfigError("grid dimension does not match frame")


def make_stepper(frame, law, history, support_lams=(), method="fft"):
    """Stepper for the nonlinear equation."""
    _check_frame_grid(frame, history)
    grid = history.grid
    shift = frame.c * frame.h * np.asarray(frame.nu)
    w, kmin = kernel_stencil(frame.kernel, grid.spacing, shift, support_lams=support_lams)
    conv = Convolver(w, kmin, grid, law, method)
    return Stepper(grid, frame.c, frame.nu, history, conv)


def make_linear_stepper(frame, lam, history, support_lams=(), method="fft"):
    """Stepper for the e^{-lam z}-conjugated linear comparison equation."""
    _check_frame_grid(frame, history)
    d = frame.d
    lamv = np.atleast_1d(np.asarray(lam, dtype=float))
    if lamv.size == 1 and d > 1:
        lamv = lamv[0] * np.asarray(frame.nu)
    grid = history.grid
    shift = frame.c * frame.h * np.asarray(frame.nu)
    w, kmin = kernel_stencil(frame.kernel, grid.spacing, shift, lam=lamv, factor=frame.lip,
                             support_lams=support_lams)
    conv = Convolver(w, kmin, grid, method=method)
    return Stepper(grid, frame.c, frame.nu, history, conv, weight=lamv)


def _default_probes(probes):
    if probes is None:
        return {"sup": lambda t, u: float(np.max(u)), "inf": lambda t, u: float(np.min(u))}
    return dict(probes)


def _run(stepper, T, probes, sample_every, store_fields):
    probes = _default_probes(probes)
    n_total = int(round((T - stepper.t) / stepper.dt))
    if sample_every is None:
        sample_every = stepper.m
    times, vals, fields = [], {k: [] for k in probes}, []

    def record():
        times.append(stepper.t)
        for k, f in probes.items():
            vals[k].append(f(stepper.t, stepper.u))
        if store_fields:
            fields.append(Field(stepper.grid, stepper.u.copy()))

    record()
    for n in range(1, n_total + 1):
        stepper.step()
        if n % sample_every == 0 or n == n_total:
            record()
    meta = {"dt": stepper.dt, "m": stepper.m, "grid": stepper.grid, "scheme": "crank-nicolson/trapezoid-delay",
            "min_value": stepper.min_value, "steps": stepper.steps}
    return Trajectory(np.array(times), {k: np.array(v) for k, v in vals.items()}, fields, meta)


def simulate(frame, law, datum: DelayHistory, T, probes=None, sample_every=None, store_fields=False,
             support_lams=(), method="fft"):
    stepper = make_stepper(frame, law, datum, support_lams, method)
    traj = _run(stepper, T, probes, sample_every, store_fields)
    traj.meta["final_history"] = stepper.history()
    return traj


def linear_comparison(frame, lam, r_datum: DelayHistory, T, probes=None, sample_every=None,
                      store_fields=False, method="fft"):
    """Weighted comparison equation; the state is r e^{-lam z} (the xi_lam-weighted variable)."""
    if any(np.min(s) < 0 for s in r_datum.slots):
        raise ConfigError("linear comparison datum must be non-negative")
    stepper = make_linear_stepper(frame, lam, r_datum, method=method)
    return _run(stepper, T, probes, sample_every, store_fields)


# ---------------------------------------------------------------------------
# wave operator


def wave_operator(frame, law, slab, dt, grid) -> Field:
    """N w = w_t - Δw + c nu.∇w + w - K*[g(w)](t-h, . - c h nu) at the last slab level.

    slab: array of shape (n_levels, *grid.shape) at times t - (n_levels-1) dt, ..., t.
    """
    slab = np.asarray(slab, dtype=float)
    m = int(round(frame.h / dt))
    if abs(m * dt - frame.h) > 1e-12 * max(1.0, frame.h):
        raise ConfigError("dt must divide h")
    if slab.shape[0] < max(m + 1, 3):
        raise CoverageError(f"slab has {slab.shape[0]} levels, needs {max(m + 1, 3)} to cover [t-h, t]")
    A, b, _ = linear_operator(grid, frame.c, frame.nu)
    shift = frame.c * frame.h * np.asarray(frame.nu)
    w, kmin = kernel_stencil(frame.kernel, grid.spacing, shift)
    conv = Convolver(w, kmin, grid, law)
    w_now = slab[-1]
    wt = (1.5 * slab[-1] - 2.0 * slab[-2] + 0.5 * slab[-3]) / dt
    lin = (A @ w_now.ravel() + b.ravel()).reshape(grid.shape)
    nl = conv(slab[-1 - m])
    return Field(grid, wt - lin - nl)


# ---------------------------------------------------------------------------
# scalar delay equations


def scalar_dde(rhs, y0, h, T, m=400):
    """Method of steps for y' = rhs(y, y(t-h)) with constant history y0, RK4 inside each step.

    Delayed values at half steps come from cubic Hermite interpolation of the
    stored solution, so the scheme stays fourth order.  Returns (t, y).
    """
    dt = h / m
    n = int(round(T / dt))
    y = np.empty(n + 1)
    f = np.empty(n + 1)
    y[0] = y0

    def past(i):
        return (y[i], f[i]) if i >= 0 else (y0, 0.0)

    f[0] = rhs(y0, y0)
    for i in range(n):
        j = i - m
        ya, fa = past(j)
        yb, fb = past(j + 1)
        if j < 0:
            fb = 0.0  # interval lies in the constant history
        ymid = 0.5 * (ya + yb) + dt * (fa - fb) / 8.0
        yi = y[i]
        k1 = rhs(yi, ya)
        k2 = rhs(yi + 0.5 * dt * k1, ymid)
        k3 = rhs(yi + 0.5 * dt * k2, ymid)
        k4 = rhs(yi + dt * k3, yb)
        y[i + 1] = yi + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        yd, _ = past(i + 1 - m)
        f[i + 1] = rhs(y[i + 1], yd)
    return dt * np.arange(n + 1), y


def delay_ode(law_alpha, beta0, T, h=1.0, m=400):
    """beta' = -beta + g_alpha(beta(t-h)) from the constant history beta0."""
    g = law_alpha
    return scalar_dde(lambda y, yd: -y + float(g(yd)), float(beta0), h, T, m)


# ---------------------------------------------------------------------------
# Jacobians (1D), used by the profile solver


def pad_matrix(grid, pads):
    """Sparse map from grid values to the padded vector (ghost rows follow the fills, 1D)."""
    n = grid.shape[0]
    (a, b), (fl, fr), dz = pads[0], grid.boundary_fill[0], grid.spacing[0]
    rows, cols, vals = list(range(a, a + n)), list(range(n)), [1.0] * n
    for k in range(1, a + 1):
        if fl == EDGE or (isinstance(fl, tuple) and not is_tail(fl)):
            rows.append(a - k)
            cols.append(0)
            vals.append(1.0 if fl == EDGE else math.exp(-fl[1] * k * dz))
    for k in range(1, b + 1):
        if fr == EDGE or (isinstance(fr, tuple) and not is_tail(fr)):
            rows.append(a + n - 1 + k)
            cols.append(n - 1)
            vals.append(1.0 if fr == EDGE else math.exp(fr[1] * k * dz))
    return sp.csr_matrix((vals, (rows, cols)), shape=(a + n + b, n))


def conv_jacobian(conv, u, dF=None):
    """Sparse derivative of u -> conv(u) at u for a 1D Convolver (dF = derivative of F)."""
    n = conv.shape[0]
    nk = conv.w.shape[0]
    Pm = pad_matrix(conv.grid, conv.pads)
    Np = Pm.shape[0]
    W = sp.diags([np.full(n, conv.w[k]) for k in range(nk)], [nk - 1 - k for k in range(nk)],
                 shape=(n, Np), format="csr")
    if dF is None:
        return (W @ Pm).tocsr()
    P = pad_field(u, conv.pads, conv.grid)
    return (W @ sp.diags(dF(P)) @ Pm).tocsr()
