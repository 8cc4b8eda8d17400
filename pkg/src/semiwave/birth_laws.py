"""Birth nonlinearities g: equilibria, Lipschitz data, monotone envelopes.

All laws share the same extension rule: slope g'(0) below zero and constant
g(cap) above the domain cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, NotMonostableError
from ._numerics import bisect_increasing


class BirthLaw:
    form = "abstract"

    def __init__(self, domain_cap=None):
        self._cap = domain_cap

    # formula on [0, cap] and its derivative; subclasses override
    def _g(self, u):
        raise NotImplementedError

    def _dg(self, u):
        raise NotImplementedError

    def _kappa_guess(self):
        return None

    @property
    def domain_cap(self):
        if self._cap is not None:
            return float(self._cap)
        k = self._kappa_guess()
        return 10.0 * k if k else math.inf

    @property
    def gprime0(self):
        return float(self._dg(np.array(0.0)))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        cap = self.domain_cap
        inner = self._g(np.clip(u, 0.0, cap if np.isfinite(cap) else None))
        out = np.where(u < 0, self.gprime0 * u, inner)
        return out if out.ndim else float(out)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        cap = self.domain_cap
        d = self._dg(np.clip(u, 0.0, cap if np.isfinite(cap) else None))
        out = np.where(u < 0, self.gprime0, np.where(u > cap, 0.0, d))
        return out if out.ndim else float(out)

    @property
    def kappa(self):
        k = getattr(self, "_kappa_cache", None)
        if k is None:
            k = _positive_fixed_point(self)
            self._kappa_cache = k
        return k

    @property
    def lip(self):
        """Global Lipschitz constant |g|_Lip on [0, cap] (and the linear extensions)."""
        v = getattr(self, "_lip_cache", None)
        if v is None:
            cap = self.domain_cap
            hi = cap if np.isfinite(cap) else 10.0 * max(1.0, self.kappa or 1.0)
            v = max(abs(self.gprime0), lipschitz_on(self, 0.0, hi))
            self._lip_cache = v
        return v

    @property
    def monotone(self):
        """Non-decreasing on [0, cap] (checked on a dense grid)."""
        cap = self.domain_cap
        hi = cap if np.isfinite(cap) else 10.0
        u = np.linspace(0.0, hi, 20001)
        return bool(np.all(np.diff(self(u)) >= -1e-14))

    def params(self):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.form}({args})"


class Nicholson(BirthLaw):
    form = "nicholson"

    def __init__(self, p, domain_cap=None):
        if not p > 0:
            raise DomainError("nicholson needs p > 0")
        self.p = float(p)
        super().__init__(domain_cap)

    def _g(self, u):
        return self.p * u * np.exp(-u)

    def _dg(self, u):
        return self.p * np.exp(-u) * (1.0 - u)

    def _kappa_guess(self):
        return math.log(self.p) if self.p > 1 else None

    def params(self):
        return {"p": self.p}


class MackeyGlass(BirthLaw):
    form = "mackey_glass"

    def __init__(self, p, n, domain_cap=None):
        if not (p > 0 and n > 0):
            raise DomainError("mackey_glass needs p > 0 and n > 0")
        self.p, self.n = float(p), float(n)
        super().__init__(domain_cap)

    def _g(self, u):
        return self.p * u / (1.0 + u ** self.n)

    def _dg(self, u):
        un = u ** self.n
        return self.p * (1.0 + (1.0 - self.n) * un) / (1.0 + un) ** 2

    def _kappa_guess(self):
        return (self.p - 1.0) ** (1.0 / self.n) if self.p > 1 else None

    def params(self):
        return {"p": self.p, "n": self.n}


class KPPQuadratic(BirthLaw):
    """g(u) = r u (1 - u/r), i.e. r u - u^2, clipped at zero for u > r."""

    form = "kpp_quadratic"

    def __init__(self, r, domain_cap=None):
        if not r > 0:
            raise DomainError("kpp_quadratic needs r > 0")
        self.r = float(r)
        super().__init__(domain_cap)

    def _g(self, u):
        return np.maximum(self.r * u - u * u, 0.0)

    def _dg(self, u):
        return np.where(u <= self.r, self.r - 2.0 * u, 0.0)

    def _kappa_guess(self):
        return self.r - 1.0 if self.r > 1 else None

    def params(self):
        return {"r": self.r}


class Linear(BirthLaw):
    """g(u) = r u; used for linear comparison runs and persistence checks."""

    form = "linear"

    def __init__(self, r, domain_cap=None):
        self.r = float(r)
        super().__init__(domain_cap)

    def _g(self, u):
        return self.r * u

    def _dg(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.r)

    @property
    def kappa(self):
        return None

    @property
    def lip(self):
        return abs(self.r)

    def params(self):
        return {"r": self.r}


class TabulatedLaw(BirthLaw):
    """Piecewise-linear law through (u_i, g_i), u increasing from 0."""

    form = "tabulated"

    def __init__(self, u, g, domain_cap=None):
        u = np.asarray(u, dtype=float)
        g = np.asarray(g, dtype=float)
        if u.ndim != 1 or u.shape != g.shape or len(u) < 2:
            raise DomainError("tabulated law needs matching 1D arrays")
        if np.any(np.diff(u) <= 0):
            raise DomainError("tabulated law abscissae must be increasing")
        if u[0] != 0.0 or g[0] != 0.0:
            raise DomainError("tabulated law must start at (0, 0)")
        self.u, self.g = u, g
        self._slopes = np.diff(g) / np.diff(u)
        super().__init__(float(u[-1]) if domain_cap is None else domain_cap)

    def _g(self, u):
        return np.interp(u, self.u, self.g)

    def _dg(self, u):
        i = np.clip(np.searchsorted(self.u, u, side="right") - 1, 0, len(self._slopes) - 1)
        return self._slopes[i]

    @property
    def gprime0(self):
        return float(self._slopes[0])

    def params(self):
        return {"n": len(self.u), "cap": float(self.u[-1])}


def nicholson(p, domain_cap=None):
    return Nicholson(p, domain_cap)


def mackey_glass(p, n, domain_cap=None):
    return MackeyGlass(p, n, domain_cap)


def kpp_quadratic(r, domain_cap=None):
    return KPPQuadratic(r, domain_cap)


def linear(r, domain_cap=None):
    return Linear(r, domain_cap)


def tabulated(u, g, domain_cap=None):
    return TabulatedLaw(u, g, domain_cap)


def load_tabulated(path, domain_cap=None):
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.split(",")]
        skip = 0
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=skip)
    return TabulatedLaw(data[:, 0], data[:, 1], domain_cap)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LawReport:
    gprime0: float
    kappa: float
    zeta2: float
    M_g: float
    m_g: float
    I_g: tuple
    rho: float
    attractor_G: bool

    def as_dict(self):
        return {"gprime0": self.gprime0, "kappa": self.kappa, "zeta2": self.zeta2,
                "M_g": self.M_g, "m_g": self.m_g, "I_g_lo": self.I_g[0], "I_g_hi": self.I_g[1],
                "rho": self.rho, "attractor_G": self.attractor_G}


def _scan_hi(law):
    cap = law.domain_cap
    if np.isfinite(cap):
        return cap
    raise NotMonostableError(f"{law!r} has no finite domain cap; not monostable")


def _positive_fixed_point(law):
    """The unique positive fixed point on (0, cap]; error if none or several."""
    hi = _scan_hi(law)
    u = np.linspace(0.0, hi, 200001)[1:]
    f = law(u) - u
    s = np.sign(f)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    zeros = list(u[np.nonzero(f == 0)[0]])
    roots = [bisect_increasing(lambda x: -(law(x) - x), u[i], u[i + 1]) for i in idx if f[i] > 0]
    roots += [bisect_increasing(lambda x: law(x) - x, u[i], u[i + 1]) for i in idx if f[i] < 0]
    roots = sorted(set(roots) | set(zeros))
    if len(roots) != 1:
        raise NotMonostableError(f"{law!r}: expected one positive fixed point, found {len(roots)}")
    return float(roots[0])


def _extremum(fun, a, b, kind, n=4097):
    """Max or min of fun on [a, b]: dense grid (leftmost tie) then bounded refinement."""
    if b <= a:
        return a, float(fun(np.array(a)))
    x = np.linspace(a, b, n)
    y = np.asarray(fun(x), dtype=float)
    sgn = 1.0 if kind == "max" else -1.0
    i = int(np.argmax(sgn * y))
    best_x, best_y = x[i], y[i]
    lo, hi = x[max(i - 1, 0)], x[min(i + 1, n - 1)]
    if hi > lo:
        r = minimize_scalar(lambda t: -sgn * float(fun(np.array(t))), bounds=(lo, hi),
                            method="bounded", options={"xatol": 1e-12 * max(1.0, abs(best_x))})
        if sgn * (-sgn * r.fun) > sgn * best_y:
            best_x, best_y = float(r.x), float(-sgn * r.fun)
    return float(best_x), float(best_y)


def lipschitz_on(law: BirthLaw, a, b):
    """sup |g(x) - g(y)| / |x - y| over [a, b]."""
    a, b = float(a), float(b)
    if b < a:
        raise DomainError("lipschitz_on needs a <= b")
    if b == a:
        return 0.0
    if isinstance(law, TabulatedLaw):
        pts = np.concatenate(([a], law.u[(law.u > a) & (law.u < b)], [b]))
        q = np.abs(np.diff(law(pts)) / np.diff(pts))
        return float(q.max())
    _, m = _extremum(lambda u: np.abs(law.derivative(u)), a, b, "max")
    quot = abs(law(b) - law(a)) / (b - a)
    return float(max(m, quot))


def analyze(law: BirthLaw) -> LawReport:
    kappa = law.kappa
    if kappa is None:
        raise NotMonostableError(f"{law!r} has no positive fixed point")
    cap = law.domain_cap
    _, zeta2 = _extremum(law, 0.0, cap, "max", n=20001)
    _, M_g = _extremum(law, 0.0, kappa, "max")
    M_g = max(M_g, kappa)
    _, m_g = _extremum(law, kappa, M_g, "min")
    m_g = min(m_g, kappa)
    rho = lipschitz_on(law, m_g, M_g)
    return LawReport(law.gprime0, kappa, zeta2, M_g, m_g, (m_g, M_g), rho,
                     _attractor_G(law, zeta2))


def _attractor_G(law, zeta2):
    # g∘g has a unique fixed point on (0, zeta2] and cobwebs from 64 seeds settle on it
    u = np.linspace(0.0, zeta2, 100001)[1:]
    f = law(law(u)) - u
    s = np.sign(f)
    crossings = int(np.sum(s[:-1] * s[1:] < 0)) + int(np.sum(s == 0))
    if crossings != 1:
        return False
    x = np.linspace(zeta2 / 64, zeta2, 64)
    for _ in range(5000):
        x = law(x)
    return bool(np.all(np.abs(x - law.kappa) < 1e-6))


def envelopes(law: BirthLaw, cap, n=100001):
    """Monotone upper envelope max_{[0,u]} g and lower envelope min_{[u,cap]} g."""
    top = law.domain_cap
    if not np.isfinite(top):
        top = cap
    top = max(top, cap)
    u_up = np.linspace(0.0, top, n)
    upper = TabulatedLaw(u_up, np.maximum.accumulate(law(u_up)), domain_cap=top)
    u_lo = np.linspace(0.0, cap, n)
    g_lo = np.minimum.accumulate(law(u_lo)[::-1])[::-1]
    lower = TabulatedLaw(u_lo, g_lo, domain_cap=cap)
    return upper, lower


@dataclass(frozen=True)
class NormalizedNicholson:
    law: BirthLaw
    h: float
    kernel: object
    time_scale: float
    space_scale: float


def nicholson_normalize(p, delta, h, kernel):
    """Rescale u_t = Δu - δu + p K*[u e^{-u}](t-h) to unit decay.

    With t' = δt and x' = sqrt(δ)x the equation becomes
    u_t' = Δ'u - u + (p/δ) K'*[u e^{-u}](t'-h'), h' = δh, K'(y') = K(y'/sqrt(δ))/sqrt(δ)^d.
    """
    if not (p > 0 and delta > 0 and h > 0):
        raise DomainError("nicholson_normalize needs p, delta, h > 0")
    f = math.sqrt(delta)
    k2 = kernel if delta == 1 else kernel.scaled(f)
    return NormalizedNicholson(Nicholson(p / delta), delta * h, k2, delta, f)
