"""Dispersal kernels with exponential moments, Fourier magnitudes and tails.

Every 1D kernel knows its moment generating function M(s) = int K(y) e^{-s y} dy
for complex s in its admissibility strip, so both mgf (real s) and the
weighted Fourier magnitude (s = lambda + i zeta) come from the same formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv

from .errors import DomainError, ResolutionError, TruncationError
from .grid import Field, Grid

TWO_PI = 2.0 * math.pi


class Kernel:
    """Base class.  Subclasses implement the 1D pieces below."""

    form = "abstract"
    dim = 1
    mass = 1.0

    # -- admissibility ---------------------------------------------------
    def window(self):
        """Open interval of real exponents lambda with finite mgf."""
        return (-math.inf, math.inf)

    def check(self, lam):
        lo, hi = self.window()
        if not (lo < lam < hi):
            raise DomainError(f"lambda={lam} outside admissibility window ({lo}, {hi}) of {self.form} kernel")

    # -- to be provided ----------------------------------------------------
    def density(self, y):
        raise NotImplementedError

    def laplace(self, s):
        """int K(y) e^{-s y} dy for complex s (real part admissible)."""
        raise NotImplementedError

    def log_laplace(self, lam):
        """log of the real mgf; overridden where overflow is possible."""
        return float(np.log(np.real(self.laplace(lam))))

    def tail(self, a, side):
        raise NotImplementedError

    def support(self, lam=0.0, tol=1e-14):
        """Interval outside which the e^{-lam y}-weighted mass is below tol."""
        raise NotImplementedError

    def scaled(self, f):
        """Kernel of the variable y' = f*y (density rescaled, mass kept)."""
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.form}({args})"

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((self.form, repr(self.params())))


@dataclass(frozen=True, eq=False, repr=False)
class Gaussian(Kernel):
    mu: float = 0.0
    var: float = 1.0
    mass: float = 1.0
    form = "gaussian"

    def __post_init__(self):
        if not (self.var > 0 and self.mass > 0):
            raise DomainError("gaussian kernel needs var > 0 and mass > 0")

    def density(self, y):
        y = np.asarray(y, dtype=float)
        return self.mass * np.exp(-((y - self.mu) ** 2) / (2 * self.var)) / math.sqrt(TWO_PI * self.var)

    def laplace(self, s):
        return self.mass * np.exp(-s * self.mu + 0.5 * s * s * self.var)

    def log_laplace(self, lam):
        return math.log(self.mass) - lam * self.mu + 0.5 * lam * lam * self.var

    def tail(self, a, side):
        sd = math.sqrt(2 * self.var)
        if side == "right":
            return 0.5 * self.mass * float(erfc((a - self.mu) / sd))
        return 0.5 * self.mass * float(erfc((self.mu - a) / sd))

    def support(self, lam=0.0, tol=1e-14):
        sig = math.sqrt(self.var)
        centre = self.mu - lam * self.var
        w = self.mass * math.exp(-lam * self.mu + 0.5 * lam * lam * self.var)
        zt = math.sqrt(2.0) * float(erfcinv(min(1.0, tol / max(w, 1e-300))))
        return centre - zt * sig, centre + zt * sig

    def scaled(self, f):
        return Gaussian(self.mu * f, self.var * f * f, self.mass)

    def params(self):
        return {"mu": self.mu, "var": self.var, "mass": self.mass}


@dataclass(frozen=True, eq=False, repr=False)
class Uniform(Kernel):
    a: float = -1.0
    b: float = 1.0
    mass: float = 1.0
    form = "uniform"

    def __post_init__(self):
        if not (self.b > self.a and self.mass > 0):
            raise DomainError("uniform kernel needs b > a and mass > 0")

    def density(self, y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= self.a) & (y <= self.b), self.mass / (self.b - self.a), 0.0)

    def laplace(self, s):
        w = self.b - self.a
        return self.mass * np.exp(-s * self.a) * _phi1(s * w)

    def tail(self, a, side):
        frac = min(1.0, max(0.0, (self.b - a) / (self.b - self.a)))
        return self.mass * (frac if side == "right" else 1.0 - frac)

    def support(self, lam=0.0, tol=1e-14):
        return self.a, self.b

    def scaled(self, f):
        lo, hi = sorted((self.a * f, self.b * f))
        return Uniform(lo, hi, self.mass)

    def params(self):
        return {"a": self.a, "b": self.b, "mass": self.mass}


@dataclass(frozen=True, eq=False, repr=False)
class Laplace(Kernel):
    mu: float = 0.0
    scale: float = 1.0
    mass: float = 1.0
    form = "laplace"

    def __post_init__(self):
        if not (self.scale > 0 and self.mass > 0):
            raise DomainError("laplace kernel needs scale > 0 and mass > 0")

    def window(self):
        return (-1.0 / self.scale, 1.0 / self.scale)

    def density(self, y):
        y = np.asarray(y, dtype=float)
        return self.mass * np.exp(-np.abs(y - self.mu) / self.scale) / (2 * self.scale)

    def laplace(self, s):
        return self.mass * np.exp(-s * self.mu) / (1.0 - (s * self.scale) ** 2)

    def tail(self, a, side):
        x = (a - self.mu) / self.scale
        right = 0.5 * math.exp(-x) if x >= 0 else 1.0 - 0.5 * math.exp(x)
        return self.mass * (right if side == "right" else 1.0 - right)

    def support(self, lam=0.0, tol=1e-14):
        self.check(lam)
        L = math.log(max(self.mass, 1.0) / tol) + 10.0
        return (self.mu - L / (1.0 / self.scale - lam), self.mu + L / (1.0 / self.scale + lam))

    def scaled(self, f):
        return Laplace(self.mu * f, self.scale * abs(f), self.mass)

    def params(self):
        return {"mu": self.mu, "scale": self.scale, "mass": self.mass}


class Tabulated(Kernel):
    """Piecewise-linear density through uniformly spaced samples, zero outside."""

    form = "tabulated"
    max_decay_per_cell = 1.0

    def __init__(self, x, f, mass=None):
        x = np.asarray(x, dtype=float)
        f = np.asarray(f, dtype=float)
        if x.ndim != 1 or x.shape != f.shape or len(x) < 2:
            raise DomainError("tabulated kernel needs matching 1D position/density arrays")
        dx = np.diff(x)
        if np.any(dx <= 0) or np.ptp(dx) > 1e-9 * dx[0]:
            raise DomainError("tabulated kernel positions must be uniformly increasing")
        if np.any(f < 0):
            raise DomainError("tabulated kernel density must be non-negative")
        raw = float(np.sum(0.5 * (f[1:] + f[:-1]) * dx))
        if not raw > 0:
            raise DomainError("tabulated kernel has zero mass")
        if mass is not None:
            f = f * (mass / raw)
            raw = float(mass)
        self.x, self.f, self.mass, self.dx = x, f, raw, float(dx[0])

    def density(self, y):
        return np.interp(y, self.x, self.f, left=0.0, right=0.0)

    def laplace(self, s):
        s = np.asarray(s)
        if np.max(np.abs(np.real(s))) * self.dx > self.max_decay_per_cell:
            raise ResolutionError(
                f"tabulated spacing {self.dx} cannot resolve e^(-lambda y) for lambda={np.real(s)}")
        x0 = self.x[:-1]
        f0, f1 = self.f[:-1], self.f[1:]
        out = []
        for sv in np.atleast_1d(s).ravel():
            t = sv * self.dx
            seg = np.exp(-sv * x0) * self.dx * (f0 * _phi1(t) + (f1 - f0) * _phi2(t))
            out.append(seg.sum())
        out = np.array(out).reshape(np.shape(s))
        return out if out.ndim else out[()]

    def tail(self, a, side):
        # exact integral of the interpolant to the right of a
        x, f = self.x, self.f
        if a <= x[0]:
            right = self.mass
        elif a >= x[-1]:
            right = 0.0
        else:
            i = int(np.searchsorted(x, a, side="right")) - 1
            fa = float(np.interp(a, x, f))
            right = 0.5 * (fa + f[i + 1]) * (x[i + 1] - a)
            right += float(np.sum(0.5 * (f[i + 1:-1] + f[i + 2:]) * self.dx))
        return right if side == "right" else self.mass - right

    def support(self, lam=0.0, tol=1e-14):
        return float(self.x[0]), float(self.x[-1])

    def scaled(self, f):
        if f > 0:
            return Tabulated(self.x * f, self.f / f, self.mass)
        return Tabulated((self.x * f)[::-1], (self.f / abs(f))[::-1], self.mass)

    def params(self):
        return {"n": len(self.x), "lo": float(self.x[0]), "hi": float(self.x[-1]), "mass": self.mass}

    def __eq__(self, other):
        return (isinstance(other, Tabulated) and np.array_equal(self.x, other.x)
                and np.array_equal(self.f, other.f))

    def __hash__(self):
        return hash((self.form, self.x.tobytes(), self.f.tobytes()))


class TensorProduct(Kernel):
    """K(y_1, ..., y_d) = prod K_i(y_i), d >= 2."""

    form = "tensor_product"

    def __init__(self, factors):
        factors = tuple(factors)
        if len(factors) < 2:
            raise DomainError("tensor_product kernel needs at least two factors")
        for k in factors:
            if not isinstance(k, Kernel) or k.dim != 1:
                raise DomainError("tensor_product factors must be 1D kernels")
        self.factors = factors
        self.dim = len(factors)
        self.mass = float(np.prod([k.mass for k in factors]))

    def check(self, lam):
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (self.dim,))
        for k, l in zip(self.factors, lam):
            k.check(float(l))

    def density(self, *ys):
        out = 1.0
        for k, y in zip(self.factors, ys):
            out = out * k.density(y)
        return out

    def laplace(self, s):
        s = np.broadcast_to(np.asarray(s), (self.dim,))
        out = 1.0
        for k, sk in zip(self.factors, s):
            out = out * k.laplace(sk)
        return out

    def log_laplace(self, lam):
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (self.dim,))
        return float(sum(k.log_laplace(float(l)) for k, l in zip(self.factors, lam)))

    def marginal(self, axis=0):
        """1D marginal along one coordinate axis."""
        others = np.prod([k.mass for i, k in enumerate(self.factors) if i != axis])
        k = self.factors[axis]
        return _with_mass(k, k.mass * others)

    def tail(self, a, side):
        return self.marginal(0).tail(a, side)

    def support(self, lam=0.0, tol=1e-14):
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (self.dim,))
        return tuple(k.support(float(l), tol) for k, l in zip(self.factors, lam))

    def scaled(self, f):
        return TensorProduct([k.scaled(f) for k in self.factors])

    def params(self):
        return {"factors": [repr(k) for k in self.factors]}


# ---------------------------------------------------------------------------
# constructors


def gaussian(mu=0.0, var=1.0, mass=1.0):
    return Gaussian(float(mu), float(var), float(mass))


def uniform(a=-1.0, b=1.0, mass=1.0):
    return Uniform(float(a), float(b), float(mass))


def laplace(mu=0.0, scale=1.0, mass=1.0):
    return Laplace(float(mu), float(scale), float(mass))


def tensor_product(factors):
    return TensorProduct(factors)


def tabulated(x, f, mass=None):
    return Tabulated(x, f, mass)


def load_tabulated(path, mass=None):
    """Two-column CSV (position, density), optional header line."""
    data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#",
                      skiprows=_header_rows(path))
    return Tabulated(data[:, 0], data[:, 1], mass)


def asymmetric_example(rho=5.0, reading="heat"):
    """Shifted gaussian e^{-(s+rho)^2}/sqrt(4 pi) under either normalization.

    reading="heat" treats it as the heat kernel at time 1 shifted by -rho
    (variance 2, unit mass); reading="literal" keeps the printed formula,
    which has variance 1/2 and mass 1/2.
    """
    if reading == "heat":
        return gaussian(-rho, 2.0, 1.0)
    if reading == "literal":
        return gaussian(-rho, 0.5, 0.5)
    raise DomainError(f"unknown reading {reading!r}")


# ---------------------------------------------------------------------------
# operations


def mgf(kernel: Kernel, lam):
    """int K(y) e^{-lam.y} dy."""
    if kernel.dim == 1:
        lam = float(np.squeeze(lam))
        kernel.check(lam)
        return float(np.real(kernel.laplace(lam)))
    kernel.check(lam)
    return float(np.real(kernel.laplace(np.asarray(lam, dtype=float))))


def log_mgf(kernel: Kernel, lam):
    """log of mgf, finite even where mgf itself overflows."""
    if kernel.dim == 1:
        lam = float(np.squeeze(lam))
    kernel.check(lam)
    return kernel.log_laplace(lam)


def weighted_fourier_magnitude(kernel: Kernel, lam, zeta):
    """|(2 pi)^{-d} int K(y) e^{-lam.y} e^{-i zeta.y} dy|."""
    d = kernel.dim
    if d == 1:
        lam = float(np.squeeze(lam))
        kernel.check(lam)
        z = np.asarray(zeta, dtype=float)
        val = np.abs(kernel.laplace(lam + 1j * z)) / TWO_PI
        return float(val) if val.ndim == 0 else val
    kernel.check(lam)
    s = np.asarray(lam, dtype=float) + 1j * np.asarray(zeta, dtype=float)
    return float(np.abs(kernel.laplace(s))) / TWO_PI ** d


def tail_mass(kernel: Kernel, a, side="right"):
    if side not in ("left", "right"):
        raise DomainError("side must be 'left' or 'right'")
    return float(kernel.tail(float(a), side))


def sample(kernel: Kernel, grid: Grid, tol=1e-8) -> Field:
    """Node samples rescaled so that sum * cell volume equals the kernel mass."""
    if grid.d != kernel.dim:
        raise DomainError(f"grid dimension {grid.d} != kernel dimension {kernel.dim}")
    factors = kernel.factors if kernel.dim > 1 else (kernel,)
    raw = None
    missing = 0.0
    for k, f in enumerate(factors):
        y = grid.axis(k)
        dz = grid.spacing[k]
        lost = f.tail(y[0] - 0.5 * dz, "left") + f.tail(y[-1] + 0.5 * dz, "right")
        missing = max(missing, lost / f.mass)
        v = np.asarray(f.density(y), dtype=float)
        raw = v if raw is None else np.multiply.outer(raw, v)
    if missing >= tol:
        raise TruncationError(f"grid misses kernel mass {missing:.3e} (allowed {tol:.1e})")
    total = float(raw.sum()) * grid.cell_volume()
    scale = kernel.mass / total
    return Field(grid, raw * scale, {"raw": raw, "renormalization": scale, "missing_mass": missing})


# ---------------------------------------------------------------------------
# helpers


def _phi1(t):
    """(1 - e^{-t}) / t, stable near 0, complex-safe."""
    t = np.asarray(t)
    small = np.abs(t) < 1e-3
    ts = np.where(small, 1.0, t)
    big = -np.expm1(-ts) / ts
    ser = 1.0 - t / 2 + t * t / 6 - t ** 3 / 24 + t ** 4 / 120
    out = np.where(small, ser, big)
    return out if out.ndim else out[()]


def _phi2(t):
    """int_0^1 u e^{-t u} du, stable near 0."""
    t = np.asarray(t)
    small = np.abs(t) < 1e-2
    ts = np.where(small, 1.0, t)
    big = (-np.expm1(-ts) - ts * np.exp(-ts)) / (ts * ts)
    ser = 0.5 - t / 3 + t * t / 8 - t ** 3 / 30 + t ** 4 / 144 - t ** 5 / 840
    out = np.where(small, ser, big)
    return out if out.ndim else out[()]


def _with_mass(k, m):
    if isinstance(k, Gaussian):
        return Gaussian(k.mu, k.var, m)
    if isinstance(k, Uniform):
        return Uniform(k.a, k.b, m)
    if isinstance(k, Laplace):
        return Laplace(k.mu, k.scale, m)
    if isinstance(k, Tabulated):
        return Tabulated(k.x, k.f, m)
    raise DomainError("cannot rescale mass of this kernel")


def _header_rows(path):
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.split(",")]
        return 0
    except ValueError:
        return 1
