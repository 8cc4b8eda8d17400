"""Desk-scale stability experiments.

Each experiment checks its hypotheses first (a failed hypothesis gives a
failing verdict, not an exception), runs the needed simulations in lockstep
and reports bound domination, envelopes and decay-rate fits.

Weights: lam > 0 means the front decays at z -> -inf.  The unbounded weight
is e^{-lam.z}; the bounded one is max(1, e^{-lam.z}), i.e. the unbounded
weight in the leading edge and 1 on the plateau side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import birth_laws, evolve, spectral, waves
from .errors import DomainError, LevelError
from .grid import EDGE, Grid, is_const, is_tail

DOMINATION_FRACTION = 0.999
ROUNDOFF = 64 * np.finfo(float).eps
CRITICAL_TOL = 1e-8


# ---------------------------------------------------------------------------
# fits and verdicts


@dataclass
class DecayFit:
    """value ~ C t^{-alpha} e^{-gamma t} on window."""

    C: float
    alpha: float
    gamma: float
    window: tuple
    residual: float
    n: int = 0
    pinned: dict = field(default_factory=dict)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.C * t ** (-self.alpha) * np.exp(-self.gamma * t)

    def as_dict(self):
        out = {"C": self.C, "alpha": self.alpha, "gamma": self.gamma, "t_lo": self.window[0],
               "t_hi": self.window[1], "residual": self.residual, "n": self.n}
        out.update({f"pinned_{k}": v for k, v in self.pinned.items()})
        return out


def _series(series):
    if isinstance(series, tuple) and len(series) == 2:
        t, v = series
    else:
        arr = np.asarray(series, dtype=float)
        t, v = arr[:, 0], arr[:, 1]
    return np.asarray(t, dtype=float), np.asarray(v, dtype=float)


def default_window(t):
    T = float(np.max(t))
    return (0.4 * T, 0.95 * T)


def decay_fit(series, window=None, pin_alpha=None, pin_gamma=None) -> DecayFit:
    """Least squares on log v = log C - alpha log t - gamma t over the window.

    series: (t, v) arrays or an (n, 2) array.  Pinning alpha or gamma leaves a
    two-parameter (log C and the other exponent) linear fit.
    """
    t, v = _series(series)
    lo, hi = default_window(t) if window is None else (float(window[0]), float(window[1]))
    if not lo < hi:
        raise DomainError(f"fit window needs t_lo < t_hi, got ({lo}, {hi})")
    sel = (t >= lo) & (t <= hi)
    ts, vs = t[sel], v[sel]
    if len(ts) < 20:
        raise DomainError(f"decay_fit needs at least 20 samples in the window, got {len(ts)}")
    if not np.all(np.isfinite(vs)) or np.any(vs <= 0):
        raise DomainError("decay_fit needs positive finite values on the window")
    uses_log_t = pin_alpha is None or pin_alpha != 0
    if uses_log_t and np.any(ts <= 0):
        raise DomainError("algebraic fit needs t > 0 on the window")
    y = np.log(vs)
    rhs = y.copy()
    cols = [np.ones_like(ts)]
    if pin_alpha is None:
        cols.append(-np.log(ts))
    elif pin_alpha:
        rhs += pin_alpha * np.log(ts)
    if pin_gamma is None:
        cols.append(-ts)
    elif pin_gamma:
        rhs += pin_gamma * ts
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, rhs, rcond=None)
    k = 1
    alpha = float(pin_alpha) if pin_alpha is not None else float(coef[k])
    k += pin_alpha is None
    gamma = float(pin_gamma) if pin_gamma is not None else float(coef[k])
    logC = float(coef[0])
    model = logC - alpha * (np.log(ts) if uses_log_t else 0.0) - gamma * ts
    res = float(np.sqrt(np.mean((y - model) ** 2)))
    pinned = {}
    if pin_alpha is not None:
        pinned["alpha"] = float(pin_alpha)
    if pin_gamma is not None:
        pinned["gamma"] = float(pin_gamma)
    return DecayFit(math.exp(logC), alpha, gamma, (lo, hi), res, int(len(ts)), pinned)


def window_shift_spread(series, window, key, **pins):
    """Largest change of fit.<key> when the window moves by +-20% of its length."""
    t, _ = _series(series)
    lo, hi = window
    L = hi - lo
    base = getattr(decay_fit(series, window, **pins), key)
    spread = 0.0
    for s in (-0.2, 0.2):
        a, b = lo + s * L, hi + s * L
        if a <= 0 or b > t[-1] + 1e-12:
            a, b = max(a, t[t > 0][0]), min(b, t[-1])
        try:
            spread = max(spread, abs(getattr(decay_fit(series, (a, b), **pins), key) - base))
        except DomainError:
            continue
    return spread


@dataclass
class StabilityVerdict:
    theorem: str
    hypotheses: dict
    domination: float = None
    fit: DecayFit = None
    passed: bool = False
    reason: str = ""
    checks: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    def as_record(self):
        """Flat key -> scalar report (stable key order)."""
        rec = {"theorem": self.theorem, "pass": bool(self.passed), "reason": self.reason}
        for group, items in (("hypothesis", self.hypotheses), ("check", self.checks)):
            for name in sorted(items):
                for k, v in items[name].items():
                    rec[f"{group}.{name}.{k}"] = _scalar(v)
        rec["domination_fraction"] = _scalar(self.domination)
        if self.fit is not None:
            for k, v in self.fit.as_dict().items():
                rec[f"fit.{k}"] = _scalar(v)
        for k in sorted(self.values):
            rec[f"value.{k}"] = _scalar(self.values[k])
        return rec


def _scalar(v):
    if v is None or isinstance(v, (bool, str)):
        return v
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    try:
        return float(v)
    except (TypeError, ValueError):
        return str(v)


def _hyp(ok, **numbers):
    return {"pass": bool(ok), **numbers}


def _verdict(theorem, hyps, checks, domination=None, fit=None, values=None, series=None, reason=""):
    failed = [k for k, h in hyps.items() if not h["pass"]] + [k for k, c in checks.items() if not c["pass"]]
    dom_ok = domination is None or domination >= DOMINATION_FRACTION
    if not dom_ok:
        failed.append("domination")
    passed = not failed
    if not reason and failed:
        reason = "failed: " + ", ".join(failed)
    return StabilityVerdict(theorem, hyps, domination, fit, passed, reason, checks, values or {},
                            series or {})


def _hypothesis_failure(theorem, hyps, values=None):
    bad = [k for k, h in hyps.items() if not h["pass"]]
    return StabilityVerdict(theorem, hyps, None, None, False, "hypothesis failed: " + ", ".join(bad),
                            {}, values or {}, {})


# ---------------------------------------------------------------------------
# data helpers


def bump(grid: Grid, center, width):
    """Compactly supported cos^2 bump of unit height (radial in 2D); zero for width <= 0."""
    if width <= 0:
        return np.zeros(grid.shape)
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    coords = grid.mesh()
    r2 = sum((x - ci) ** 2 for x, ci in zip(coords, c))
    r = np.sqrt(r2)
    return np.where(r < width, np.cos(0.5 * np.pi * r / width) ** 2, 0.0)


def gaussian_bump(grid: Grid, center, width=1.0):
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    coords = grid.mesh()
    return np.exp(-sum((x - ci) ** 2 for x, ci in zip(coords, c)) / width ** 2)


def weight(grid: Grid, lam, nu=None):
    """Unbounded weight e^{-lam.z} on the grid nodes (lam scalar along nu or a vector)."""
    lamv = np.atleast_1d(np.asarray(lam, dtype=float))
    if lamv.size == 1 and grid.d > 1:
        nu = np.asarray(nu if nu is not None else (1.0,) + (0.0,) * (grid.d - 1))
        lamv = lamv[0] * nu
    s = sum(l * x for l, x in zip(lamv, grid.mesh()))
    with np.errstate(over="ignore"):
        return np.exp(-s)


def bounded_weight(grid: Grid, lam, nu=None):
    return np.maximum(1.0, weight(grid, lam, nu))


def weighted_norm(values, grid: Grid, w, p=1):
    v = np.abs(w * values)
    if p == np.inf or p == "inf":
        return float(np.max(v))
    return float(np.sum(v ** p) * grid.cell_volume()) ** (1.0 / p)


def history_norm(hist: evolve.DelayHistory, w, p=1):
    """max over the delay segment of the weighted L^p norm."""
    return max(weighted_norm(s, hist.grid, w, p) for s in hist.slots)


def tail_datum(grid: Grid, lam, kappa, amplitude=1.0, j=0):
    """min(kappa, A |z|^j e^{lam z}) made monotone toward the plateau (1D)."""
    z = grid.z
    with np.errstate(over="ignore"):
        v = amplitude * np.abs(z) ** j * np.exp(np.clip(lam * z, -745, 709))
    v = np.minimum(kappa, v)
    return np.maximum.accumulate(v) if lam > 0 else np.maximum.accumulate(v[::-1])[::-1]


def difference_fill(fill):
    """Fill for |u - psi| given the data fill: zero for prescribed ghosts, edge otherwise."""
    return 0.0 if (is_const(fill) or is_tail(fill)) else EDGE


def sample_every_for(m, dt, T, per_delay=4, min_window_samples=40):
    every = max(1, m // per_delay)
    window = 0.55 * T
    while every > 1 and window / (every * dt) < min_window_samples:
        every //= 2
    return every


def _lockstep(steppers, T, every, observe):
    t0 = steppers[0].t
    dt = steppers[0].dt
    n_total = int(round((T - t0) / dt))
    observe(steppers[0].t, [s.u for s in steppers])
    for n in range(1, n_total + 1):
        for s in steppers:
            s.step()
        if n % every == 0 or n == n_total:
            observe(steppers[0].t, [s.u for s in steppers])


def _lam_scalar(frame, lam):
    lamv = np.atleast_1d(np.asarray(lam, dtype=float))
    return float(lamv[0]) if lamv.size == 1 else float(np.dot(lamv, frame.nu))


def scheme_spectrum(frame, law, dz, lam):
    """(E, gamma) of the second-order scheme at weight lam along axis 0."""
    if frame.d > 1:
        # planar weight along axis 0: transverse differences vanish, the kernel enters by its marginal
        frame = spectral.FrameSpec(1, frame.c, frame.h, frame.kernel.marginal(0), frame.law)
    E = waves.scheme_char(frame, dz, (lam,))
    lip = frame.lip
    p = E(lam, 0.0)
    q = E(lam, lip) - p
    e = E(lam, law.gprime0)
    return e, spectral._gamma_from(p, q, frame.h)


def _spectral_hyp(frame, lam, law=None, grid=None):
    """Characteristic values at lam; with a grid, the scheme's own values decide.

    At finite dz the simulated system is critical at the scheme's double
    root, not at the continuous one, so E_c and gamma_lambda are taken from
    the scheme whenever nu is the first grid axis.
    """
    try:
        ls = _lam_scalar(frame, lam)
        E = spectral.char_eval(frame, ls)
        g = spectral.gamma_lambda(frame, lam)
        out = {"E_c_continuous": E, "gamma_lambda_continuous": g}
        axis0 = grid is not None and abs(frame.nu[0] - 1.0) < 1e-14
        if axis0 and law is not None:
            E, g = scheme_spectrum(frame, law, grid.spacing[0], ls)
        return _hyp(np.isfinite(E) and np.isfinite(g), E_c=E, gamma_lambda=g, lam=ls,
                    source="scheme" if axis0 else "continuous", **out)
    except (DomainError, ArithmeticError, ValueError) as e:
        return _hyp(False, error=str(e))


# ---------------------------------------------------------------------------
# weighted comparison


def comparison_experiment(frame, law, u0: evolve.DelayHistory, psi0: evolve.DelayHistory, lam, T,
                          sample_every=None, window=None, method="direct", fit_model="auto"):
    """Two solutions and the linear comparison solution r, advanced in lockstep.

    r is evolved in the weighted variable e^{-lam.z} r from e^{-lam.z}|u0 - psi0|.
    Pointwise domination e^{-lam.z}|u - psi| <= r is counted on all nodes for
    t > max(2h, h(d+1)/2), with a rounding floor of 64 eps times the weighted
    magnitudes of u and psi (the difference cannot be resolved below it).
    """
    d, h = frame.d, frame.h
    grid = u0.grid
    hyps = {}
    same = (psi0.grid == grid and psi0.m == u0.m and abs(psi0.dt - u0.dt) < 1e-15)
    vals = [np.concatenate([s.ravel() for s in H.slots]) for H in (u0, psi0)]
    lo = min(float(v.min()) for v in vals)
    fin = all(np.all(np.isfinite(v)) for v in vals)
    hyps["data_admissible"] = _hyp(same and fin and lo >= 0, min_value=lo,
                                   max_value=max(float(v.max()) for v in vals))
    hyps["weight_admissible"] = _spectral_hyp(frame, lam, law, grid)
    W = weight(grid, lam, frame.nu)
    r_slots = [W * np.abs(a - b) for a, b in zip(u0.slots, psi0.slots)] if same else []
    norm0 = max(float(np.sum(s) * grid.cell_volume()) for s in r_slots) if r_slots else math.inf
    hyps["weighted_L1_finite"] = _hyp(np.isfinite(norm0), norm=norm0)
    if not all(h_["pass"] for h_ in hyps.values()):
        return _hypothesis_failure("comparison", hyps)

    gam = hyps["weight_admissible"]["gamma_lambda"]
    A = spectral.a_lambda(frame, lam)
    rfill = tuple((difference_fill(a), difference_fill(b)) for a, b in grid.boundary_fill)
    rgrid = grid.with_fill(rfill)
    r0 = evolve.DelayHistory(rgrid, r_slots, u0.dt, u0.t)
    su = evolve.make_stepper(frame, law, u0, method=method)
    sp = evolve.make_stepper(frame, law, psi0, method=method)
    sr = evolve.make_linear_stepper(frame, lam, r0, method=method)
    every = sample_every or sample_every_for(u0.m, u0.dt, T)
    t_dom = max(2 * h, h * (d + 1) / 2.0)
    t_bound = h * (d + 1) / 2.0
    acc = {"t": [], "sup": [], "sup_r": [], "bound": [], "n": 0, "bad": 0, "nb": 0, "badb": 0,
           "max_ratio": 0.0, "max_excess": 0.0}

    def observe(t, us):
        u, p, r = us
        D = W * np.abs(u - p)
        floor = ROUNDOFF * W * (np.abs(u) + np.abs(p))
        sup = float(np.max(D))
        acc["t"].append(t)
        acc["sup"].append(sup)
        acc["sup_r"].append(float(np.max(r)))
        b = A * norm0 * t ** (-d / 2.0) * math.exp(-gam * t) if t > 0 else math.inf
        acc["bound"].append(b)
        if t > t_dom + 1e-12:
            bad = D > r * (1 + 1e-9) + floor
            acc["n"] += D.size
            acc["bad"] += int(np.count_nonzero(bad))
            ex = D - r - floor
            acc["max_excess"] = max(acc["max_excess"], float(np.max(ex)))
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(D > floor, D / np.maximum(r, 1e-300), 0.0)
            acc["max_ratio"] = max(acc["max_ratio"], float(np.max(ratio)))
        if t > t_bound + 1e-12:
            acc["nb"] += 1
            acc["badb"] += int(sup > b * (1 + 1e-9))

    _lockstep([su, sp, sr], T, every, observe)
    t = np.array(acc["t"])
    sup = np.array(acc["sup"])
    frac = 1.0 - acc["bad"] / acc["n"] if acc["n"] else 1.0
    frac_b = 1.0 - acc["badb"] / acc["nb"] if acc["nb"] else 1.0
    checks = {
        "pointwise_domination": _hyp(frac >= DOMINATION_FRACTION, fraction=frac, samples=acc["n"],
                                     max_ratio=acc["max_ratio"], max_excess=acc["max_excess"]),
        "sup_bound": _hyp(frac_b >= DOMINATION_FRACTION, fraction=frac_b, A_lambda=A, norm_r0=norm0),
    }
    exp_alpha, exp_gamma = d / 2.0, gam
    if fit_model == "auto":
        fit_model = "alpha" if abs(gam) <= CRITICAL_TOL else "gamma"
    pins = {"alpha": {"pin_gamma": 0.0}, "gamma": {"pin_alpha": d / 2.0}, "full": {}}[fit_model]
    window = window or default_window(t)
    fit, values = None, {"expected_alpha": exp_alpha, "expected_gamma": exp_gamma, "fit_model": fit_model,
                         "t_domination_from": t_dom}
    try:
        fit = decay_fit((t, sup), window, **pins)
        values["window_shift_spread"] = window_shift_spread(
            (t, sup), window, "alpha" if fit_model == "alpha" else "gamma", **pins)
    except DomainError as e:
        values["fit_skipped"] = str(e)
    series = {"decay": {"t": t, "sup_weighted_diff": sup, "sup_r": np.array(acc["sup_r"]),
                        "bound": np.array(acc["bound"])}}
    return _verdict("comparison", hyps, checks, frac, fit, values, series)


# ---------------------------------------------------------------------------
# local and global convergence to a front


def _plateau_entry(z, phi, kappa, tol, orientation):
    """First z beyond which |phi - kappa| <= tol holds up to the plateau end (None if never)."""
    ok = np.abs(phi - kappa) <= tol
    if orientation == "right":
        z, ok = -z[::-1], ok[::-1]
    if not ok[-1]:
        return None
    bad = np.nonzero(~ok)[0]
    i = 0 if len(bad) == 0 else bad[-1] + 1
    zi = float(z[i])
    return zi if orientation == "left" else -zi


def _front_grid(profile, extent):
    if extent is None:
        return profile.samples
    return waves.embed_profile(profile, extent[0], extent[1])


def _run_pair(frame, law, u0, psi0, T, every, method, probe):
    su = evolve.make_stepper(frame, law, u0, method=method)
    sp = evolve.make_stepper(frame, law, psi0, method=method)
    _lockstep([su, sp], T, every, probe)


def local_stability_experiment(frame, law, profile, lam, eps, T, C_eps=0.5, center=None, width=2.0,
                               extent=None, m=None, sample_every=None, slack=None, method="direct"):
    """Front plus a compactly supported bump of weighted size eps*C_eps; envelope check.

    Case (i) E_c(lam) < 0: sup|u - phi| <= (eps/2) e^{-gamma* t}.
    Case (ii) E_c(lam) = 0: sup|u - phi| (t + delta*)^{d/2} <= eps/2 (times 1 + slack).
    """
    kappa, h, d = law.kappa, frame.h, frame.d
    hyps = {}
    rho_eps = birth_laws.lipschitz_on(law, max(0.0, kappa - eps), kappa + eps)
    hyps["rho_eps_below_one"] = _hyp(rho_eps < 1, rho_eps=rho_eps, eps=eps)
    z_eps = _plateau_entry(profile.z, profile.phi, kappa, eps / 2.0, profile.orientation)
    hyps["plateau_within_half_eps"] = _hyp(z_eps is not None and eps < kappa, z_eps=z_eps)
    sh = _spectral_hyp(frame, lam, law, profile.grid)
    hyps["weight_admissible"] = sh
    hyps["C_eps_range"] = _hyp(0 < C_eps <= 0.5, C_eps=C_eps)
    values = {}
    case = None
    if sh["pass"]:
        E = sh["E_c"]
        if E < -CRITICAL_TOL:
            case = "exponential"
        elif abs(E) <= CRITICAL_TOL:
            case = "algebraic"
        hyps["E_c_nonpositive"] = _hyp(case is not None, E_c=E)
    if all(x["pass"] for x in hyps.values()):
        if case == "exponential":
            gs = spectral.gamma_star(rho_eps, h, sh["gamma_lambda"])
            hyps["gamma_star_exists"] = _hyp(gs is not None and gs > 0, gamma_star=gs)
            values["gamma_star"] = gs
        else:
            try:
                ds = spectral.delta_star(rho_eps, h, d)
                hyps["delta_star_exists"] = _hyp(True, delta_star=ds)
                values["delta_star"] = ds
            except DomainError as e:
                hyps["delta_star_exists"] = _hyp(False, error=str(e))
    if not all(x["pass"] for x in hyps.values()):
        return _hypothesis_failure("local_stability", hyps, values)

    base = _front_grid(profile, extent)
    grid = base.grid
    m = m or evolve.default_m(h, grid.spacing[0])
    dt = h / m
    center = 0.0 if center is None else center
    shape = bump(grid, center, width)
    wb = bounded_weight(grid, lam, frame.nu)
    scale = max(weighted_norm(shape, grid, wb, 1), float(np.max(shape)))
    amp = eps * C_eps / scale if scale > 0 else 0.0
    pert = amp * shape
    u0 = evolve.DelayHistory.constant(grid, base.values + pert, m, dt)
    p0 = evolve.DelayHistory.constant(grid, base.values, m, dt)
    values.update(case=case, perturbation_amplitude=amp,
                  perturbation_weighted_L1=weighted_norm(pert, grid, wb, 1),
                  perturbation_sup=float(np.max(np.abs(pert))))
    every = sample_every or sample_every_for(m, dt, T)
    ts, sups = [], []

    def probe(t, us):
        ts.append(t)
        sups.append(float(np.max(np.abs(us[0] - us[1]))))

    _run_pair(frame, law, u0, p0, T, every, method, probe)
    t, sup = np.array(ts), np.array(sups)
    if case == "exponential":
        env = 0.5 * eps * np.exp(-values["gamma_star"] * t)
        slack = 0.0 if slack is None else slack
    else:
        env = 0.5 * eps / (t + values["delta_star"]) ** (d / 2.0)
        slack = 0.05 if slack is None else slack
    ok = sup <= env * (1 + slack) + 1e-13
    checks = {"envelope": _hyp(bool(np.all(ok)), fraction=float(np.mean(ok)), slack=slack,
                               max_ratio=float(np.max(sup / env)))}
    fit = None
    try:
        fit = decay_fit((t, sup), None, **({"pin_alpha": 0.0} if case == "exponential" else {"pin_gamma": 0.0}))
    except DomainError as e:
        values["fit_skipped"] = str(e)
    series = {"envelope": {"t": t, "sup_diff": sup, "envelope": env}}
    return _verdict("local_stability", hyps, checks, None, fit, values, series)


def ic_check(u0: evolve.DelayHistory, z0, orientation="left"):
    """(sigma, ok): inf of the datum over the plateau half-line beyond z0."""
    z = u0.grid.z
    mask = z >= z0 if orientation == "left" else z <= -z0
    if not np.any(mask):
        return 0.0, False
    sigma = min(float(np.min(s[mask])) for s in u0.slots)
    return sigma, sigma > 0


def band_entry(t, lo_vals, hi_vals, band):
    """First sample time after which lo >= band[0] and hi <= band[1] hold for all later samples."""
    inside = (np.asarray(lo_vals) >= band[0]) & (np.asarray(hi_vals) <= band[1])
    if not inside[-1]:
        return None
    bad = np.nonzero(~inside)[0]
    i = 0 if len(bad) == 0 else bad[-1] + 1
    return float(t[i])


def global_stability_experiment(frame, law, profile, lam, u0: evolve.DelayHistory, T, z0=0.0,
                                band_eps=0.05, z_threshold=None, sample_every=None, window=None,
                                method="direct", noise_floor=1e-11):
    """Convergence of an (IC) datum to the front, with the squeeze interlude recorded."""
    h = frame.h
    hyps = {"dimension_one": _hyp(frame.d == 1, d=frame.d)}
    rep = birth_laws.analyze(law)
    hyps["rho_below_one"] = _hyp(rep.rho < 1, rho=rep.rho, m_g=rep.m_g, M_g=rep.M_g)
    grid = u0.grid
    vals = np.concatenate([s.ravel() for s in u0.slots])
    hyps["datum_bounded_nonnegative"] = _hyp(np.all(np.isfinite(vals)) and vals.min() >= 0,
                                             min_value=float(vals.min()), max_value=float(vals.max()))
    sigma, ok = ic_check(u0, z0, profile.orientation)
    hyps["initial_condition_IC"] = _hyp(ok, sigma=sigma, z0=z0)
    phi = profile(grid.z)
    wb = bounded_weight(grid, lam, frame.nu)
    diff = [np.abs(s - phi) for s in u0.slots]
    n1 = max(weighted_norm(dv, grid, wb, 1) for dv in diff)
    ninf = max(weighted_norm(dv, grid, wb, np.inf) for dv in diff)
    lead = 0 if profile.orientation == "left" else -1
    edge_ratio = max(float((wb * dv)[lead]) for dv in diff) / max(ninf, 1e-300)
    hyps["difference_weighted_finite"] = _hyp(np.isfinite(n1) and np.isfinite(ninf) and edge_ratio < 1e-3,
                                              L1=n1, Linf=ninf, edge_ratio=edge_ratio)
    sh = _spectral_hyp(frame, lam, law, grid)
    hyps["weight_admissible"] = sh
    case, values = None, {}
    if sh["pass"]:
        E = sh["E_c"]
        case = "exponential" if E < -CRITICAL_TOL else ("algebraic" if abs(E) <= CRITICAL_TOL else None)
        hyps["E_c_nonpositive"] = _hyp(case is not None, E_c=E)
        if case == "exponential":
            gs = spectral.gamma_star(rep.rho, h, sh["gamma_lambda"]) if rep.rho < 1 else None
            hyps["gamma_star_exists"] = _hyp(gs is not None and gs > 0, gamma_star=gs)
            values["gamma_star"] = gs
    if not all(x["pass"] for x in hyps.values()):
        return _hypothesis_failure("global_stability", hyps, values)

    psi0 = evolve.DelayHistory.constant(grid, phi, u0.m, u0.dt, u0.t)
    every = sample_every or sample_every_for(u0.m, u0.dt, T)
    band = (rep.m_g - band_eps, rep.M_g + band_eps)
    if z_threshold is None:
        z_threshold = _plateau_entry(profile.z, profile.phi, law.kappa, band_eps, profile.orientation) or 0.0
    zmask = grid.z >= z_threshold if profile.orientation == "left" else grid.z <= z_threshold
    rec = {"t": [], "sup": [], "lo": [], "hi": []}

    def probe(t, us):
        rec["t"].append(t)
        rec["sup"].append(float(np.max(np.abs(us[0] - us[1]))))
        rec["lo"].append(float(np.min(us[0][zmask])))
        rec["hi"].append(float(np.max(us[0][zmask])))

    _run_pair(frame, law, u0, psi0, T, every, method, probe)
    t, sup = np.array(rec["t"]), np.array(rec["sup"])
    T_eps = band_entry(t, rec["lo"], rec["hi"], band)
    values.update(case=case, T_eps=T_eps, band_lo=band[0], band_hi=band[1], z_threshold=z_threshold,
                  C_fitted=None)
    checks = {"squeeze_band_entered": _hyp(T_eps is not None, T_eps=T_eps)}
    window = window or default_window(t)
    # stop the window where the difference reaches the rounding floor of the plateau
    floor = noise_floor * law.kappa
    low = np.nonzero((t >= window[0]) & (sup <= floor))[0]
    if len(low):
        values["window_cut_at"] = float(t[low[0]])
        window = (window[0], min(window[1], float(t[low[0]]) - 1e-12))
        if window[1] <= window[0] or np.count_nonzero((t >= window[0]) & (t <= window[1])) < 20:
            window = (0.4 * window[1], window[1])
    fit = None
    pins = {"pin_alpha": 0.0} if case == "exponential" else {"pin_gamma": 0.0}
    if np.max(sup) == 0.0:
        checks["rate"] = _hyp(True, trivial=True)
    else:
        try:
            fit = decay_fit((t, sup), window, **pins)
            values["C_fitted"] = fit.C
            key = "gamma" if case == "exponential" else "alpha"
            values["window_shift_spread"] = window_shift_spread((t, sup), window, key, **pins)
            if case == "exponential":
                checks["rate"] = _hyp(fit.gamma >= 0.8 * values["gamma_star"], gamma_fit=fit.gamma,
                                      gamma_star=values["gamma_star"])
            else:
                checks["rate"] = _hyp(fit.alpha >= 0.35, alpha_fit=fit.alpha, target=0.5)
        except DomainError as e:
            checks["rate"] = _hyp(False, error=str(e))
    series = {"decay": {"t": t, "sup_diff": sup, "band_min": np.array(rec["lo"]),
                        "band_max": np.array(rec["hi"])}}
    return _verdict("global_stability", hyps, checks, None, fit, values, series)


# ---------------------------------------------------------------------------
# sub- and super-solutions


def gg_box(law, gamma, h, delta=None, n=200, q_max=None):
    """Numerical (gg1)/(gg) windows on an n x n sampling of each box.

    Returns delta, q_lower (largest q_* with g(u) - g(u - q e^{gamma h}) <= q(1 - 2 gamma)
    on [kappa-delta, kappa+delta] x [0, q_*]), q_upper (largest q^* with
    g(u) - g(u + q e^{gamma h}) >= -q(1 - 2 gamma) on the matching box), and
    gamma_star (largest gamma on an n-point grid of [0, 1/2) for which both
    inequalities hold for small q, i.e. sup |g'| e^{gamma h} <= 1 - 2 gamma on the u-range).
    """
    kappa = law.kappa
    delta = 0.25 * kappa if delta is None else delta
    u = np.linspace(kappa - delta, kappa + delta, n)
    q_max = kappa if q_max is None else q_max
    qs = np.linspace(0.0, q_max, n + 1)[1:]
    U, Q = np.meshgrid(u, qs, indexing="ij")
    e = math.exp(gamma * h)
    lower_ok = law(U) - law(U - Q * e) <= Q * (1 - 2 * gamma) + 1e-15
    upper_ok = law(U) - law(U + Q * e) >= -Q * (1 - 2 * gamma) - 1e-15
    col_lo = np.all(lower_ok, axis=0)
    col_hi = np.all(upper_ok, axis=0)

    def largest(col):
        bad = np.nonzero(~col)[0]
        k = len(col) if len(bad) == 0 else bad[0]
        return float(qs[k - 1]) if k > 0 else 0.0

    q_lower = largest(col_lo)
    q_lower = min(q_lower, kappa * (1 - 1e-12))
    q_upper = largest(col_hi)
    lipb = float(np.max(np.abs(law.derivative(u))))
    gammas = np.linspace(0.0, 0.5, n, endpoint=False)
    okg = lipb * np.exp(gammas * h) <= 1 - 2 * gammas
    gstar = float(gammas[np.nonzero(okg)[0][-1]]) if np.any(okg) else None
    return {"delta": float(delta), "q_lower": q_lower, "q_upper": q_upper, "gamma_star": gstar,
            "lip_box": lipb}


def eta(z, lam):
    """Bounded weight min(1, e^{lam z})."""
    with np.errstate(over="ignore"):
        return np.minimum(1.0, np.exp(np.clip(lam * np.asarray(z, dtype=float), -745, 709)))


def best_rate(frame, roots=None):
    """lam between the roots maximizing gamma_lam (lam1 for a double root)."""
    roots = roots or spectral.char_roots(frame)
    if roots.j_c == 1 or roots.lam2 is None:
        return roots.lam1
    from ._numerics import golden_min
    x, _ = golden_min(lambda l: -spectral.gamma_lambda(frame, l), roots.lam1, roots.lam2, tol=1e-10)
    return float(x)


def subsuper_check(frame, law, profile, q, gamma, b=None, sign=1, lam_c=None, delta=None, m=20,
                   n_box=200, required=DOMINATION_FRACTION, t0=None):
    """Sign of the wave operator on u_pm = phi +- q e^{-gamma t} eta(z - b) over one delay slab.

    The operator is evaluated on a grid extended by the kernel reach so the
    checked nodes (the profile grid) never see boundary ghosts.  Tolerance is
    10 x the larger of the operator's values on the kappa constant and on
    phi itself (the measured discretization floor).
    """
    if frame.d != 1:
        raise DomainError("subsuper_check works on the 1D profile")
    h, kappa = frame.h, law.kappa
    hyps = {"law_monotone": _hyp(law.monotone)}
    box = gg_box(law, gamma, h, delta, n_box)
    hyps["gamma_window"] = _hyp(box["gamma_star"] is not None and 0 <= gamma <= box["gamma_star"] + 1e-15,
                                gamma=gamma, gamma_star=box["gamma_star"])
    qcap = box["q_upper"] if sign > 0 else box["q_lower"]
    hyps["q_window"] = _hyp(0 <= q <= qcap, q=q, q_cap=qcap, delta=box["delta"])
    orient = profile.orientation
    zplus = _plateau_entry(profile.z, profile.phi, kappa, box["delta"], orient)
    hyps["plateau_within_delta"] = _hyp(zplus is not None, z_plus=zplus)
    roots = profile.meta.get("roots") or spectral.char_roots(frame)
    lam_c = best_rate(frame, roots) if lam_c is None else lam_c
    gl = spectral.gamma_lambda(frame, lam_c)
    hyps["condition_E"] = _hyp(gamma <= gl + CRITICAL_TOL, lam_c=lam_c, gamma_lambda=gl)
    values = {"lam_c": lam_c, "q_lower": box["q_lower"], "q_upper": box["q_upper"]}
    if zplus is not None:
        key = "z_plus" if orient == "left" else "z_minus"
        try:
            bg = spectral.b_gamma({key: zplus}, frame, gamma)
            values["b_gamma"] = bg
            b = bg if b is None else b
            okb = b >= bg - 1e-12 if orient == "left" else b <= bg + 1e-12
            hyps["b_beyond_b_gamma"] = _hyp(okb, b=b, b_gamma=bg)
        except LevelError as e:
            hyps["b_beyond_b_gamma"] = _hyp(False, error=str(e))
    if not all(x["pass"] for x in hyps.values()):
        return _hypothesis_failure("subsuper", hyps, values)

    dz = profile.grid.spacing[0]
    w, kmin = evolve.kernel_stencil(frame.kernel, (dz,), frame.c * h)
    reach = dz * (max(abs(kmin[0]), abs(kmin[0] + len(w) - 1)) + 3)
    z = profile.z
    ext = waves.embed_profile(profile, z[0] - reach, z[-1] + reach)
    grid = ext.grid
    ze = grid.z
    inner = (ze >= z[0] - 1e-9) & (ze <= z[-1] + 1e-9)
    dt = h / m
    t0 = h if t0 is None else t0
    times = t0 - dt * np.arange(m + 2)[::-1]
    sgn = 1.0 if sign > 0 else -1.0
    et = eta(ze - b, lam_c if orient == "left" else -abs(lam_c))
    slab = np.array([ext.values + sgn * q * math.exp(-gamma * s) * et for s in times])
    N = evolve.wave_operator(frame, law, slab, dt, grid).values
    Nk = evolve.wave_operator(frame, law, np.full((m + 2,) + grid.shape, kappa), dt,
                              grid.with_fill(((EDGE, EDGE),))).values
    Nphi = evolve.wave_operator(frame, law, np.repeat(ext.values[None], m + 2, axis=0), dt, grid).values
    err_k = float(np.max(np.abs(Nk)))
    err_phi = float(np.max(np.abs(Nphi[inner])))
    tol = 10.0 * max(err_k, err_phi)
    check = inner & (np.abs(ze - b) > dz * (1 + 1e-9))
    good = sgn * N[check] >= -tol
    frac = float(np.mean(good)) if good.size else 1.0
    # kink: one-sided slopes of u_+ at b
    d_ = 1e-6
    phi_l, phi_r = profile(np.array([b - d_, b])), profile(np.array([b, b + d_]))
    lam_e = lam_c if orient == "left" else -abs(lam_c)
    amp = q * math.exp(-gamma * t0)
    left = (phi_l[1] - phi_l[0]) / d_ + amp * (eta(0.0, lam_e) - eta(-d_, lam_e)) / d_
    right = (phi_r[1] - phi_r[0]) / d_ + amp * (eta(d_, lam_e) - eta(0.0, lam_e)) / d_
    kink_ok = left > right if q > 0 else True
    checks = {"sign_condition": _hyp(frac >= required, fraction=frac, nodes=int(good.size), tol=tol,
                                     min_signed=float(np.min(sgn * N[check])) if good.size else 0.0),
              "kink": _hyp(kink_ok, slope_left=left, slope_right=right)}
    values.update(err_kappa=err_k, err_phi=err_phi, b=b, t0=t0)
    series = {"operator": {"z": ze[inner], "phi": ext.values[inner],
                           "u_pm": slab[-1][inner], "N": N[inner]}}
    return _verdict("subsuper", hyps, checks, frac, None, values, series)


# ---------------------------------------------------------------------------
# squeezing between the homogeneous envelopes


def squeeze_experiment(frame, law, u0: evolve.DelayHistory, eps, T, z0=0.0, orientation="left",
                       z_offset=0.0, sample_every=None, method="direct"):
    """Entry into [m_g - eps, M_g + eps] on the quadrant {t >= T_e, z >= T_e + z_offset}.

    Cross-checks: sup_z u(t) <= u_bar(t), the delay ODE with the upper
    monotone envelope from sup u0; the lower envelope beta(t) from sigma is
    reported alongside the measured lower entry.
    """
    h = frame.h
    rep = birth_laws.analyze(law)
    vals = np.concatenate([s.ravel() for s in u0.slots])
    sigma, ok = ic_check(u0, z0, orientation)
    hyps = {"datum_bounded_nonnegative": _hyp(np.all(np.isfinite(vals)) and vals.min() >= 0,
                                              min_value=float(vals.min()), max_value=float(vals.max())),
            "initial_condition_IC": _hyp(ok, sigma=sigma, z0=z0),
            "rho_below_one": _hyp(rep.rho < 1, rho=rep.rho)}
    if not all(x["pass"] for x in hyps.values()):
        return _hypothesis_failure("squeeze", hyps)
    band = (rep.m_g - eps, rep.M_g + eps)
    grid = u0.grid
    z = grid.z if grid.d == 1 else grid.mesh()[0]
    zz = z if orientation == "left" else -z
    every = sample_every or max(1, u0.m // 20)
    st = evolve.make_stepper(frame, law, u0, method=method)
    ts, sups, profiles_lo, profiles_hi = [], [], [], []
    # running extrema over z >= s, for every s on the grid, recorded per sample
    order = np.argsort(zz.ravel(), kind="stable")
    zs = zz.ravel()[order]

    def probe(t, us):
        u = us[0].ravel()[order]
        ts.append(t)
        sups.append(float(np.max(u)))
        profiles_lo.append(np.minimum.accumulate(u[::-1])[::-1])
        profiles_hi.append(np.maximum.accumulate(u[::-1])[::-1])

    _lockstep([st], T, every, probe)
    t = np.array(ts)
    LO, HI = np.array(profiles_lo), np.array(profiles_hi)
    T_eps = None
    for i, Tc in enumerate(t):
        j = np.searchsorted(zs, Tc + z_offset)
        if j >= len(zs):
            break
        if np.all(LO[i:, j] >= band[0]) and np.all(HI[i:, j] <= band[1]):
            T_eps = float(Tc)
            break
    upper, lower = birth_laws.envelopes(law, max(rep.M_g, float(vals.max())) + 1.0)
    beta0 = float(vals.max())
    tu, ub = evolve.delay_ode(upper, beta0, T, h, u0.m)
    ub_s = np.interp(t, tu, ub)
    up_ok = np.array(sups) <= ub_s + 1e-6
    tl, lb = evolve.delay_ode(lower, sigma, T, h, u0.m)
    beta_entry = band_entry(tl, lb, np.full_like(lb, -np.inf), (band[0], np.inf))
    checks = {"band_entered": _hyp(T_eps is not None, T_eps=T_eps),
              "upper_envelope": _hyp(bool(np.all(up_ok)), fraction=float(np.mean(up_ok)),
                                     max_excess=float(np.max(np.array(sups) - ub_s)))}
    values = {"T_eps": T_eps, "band_lo": band[0], "band_hi": band[1], "m_g": rep.m_g, "M_g": rep.M_g,
              "beta_entry_time": beta_entry, "sigma": sigma}
    series = {"squeeze": {"t": t, "sup_u": np.array(sups), "u_bar": ub_s,
                          "beta": np.interp(t, tl, lb)}}
    return _verdict("squeeze", hyps, checks, None, None, values, series)


# ---------------------------------------------------------------------------
# persistence of disturbances


def persistence_constants(frame, law, lam_p):
    """theta, theta1, theta2 of the weighted a-priori growth bound."""
    h = frame.h
    lv = np.atleast_1d(np.asarray(lam_p, dtype=float))
    lv = lv[0] * np.asarray(frame.nu) if lv.size == 1 else lv
    s = float(np.dot(lv, frame.nu))
    d2 = float(np.dot(lv, lv)) - frame.c * s - 1.0
    K1 = math.exp(-s * frame.c * h) * float(np.real(frame.kernel.laplace(lv if frame.d > 1 else s)))
    d3 = law.lip
    theta = math.exp(2 * h * abs(d2)) * (1 + h * math.exp(-d2 * h) * d3 * K1)
    th1 = math.exp(abs(d2) * h) / math.sqrt(math.pi)
    th2 = 2 * d3 * K1 * math.exp(2 * abs(d2) * h) / math.sqrt(math.pi)
    return {"theta": theta, "theta1": th1, "theta2": th2, "d2": d2, "K_weighted_L1": K1, "d3": d3}


def persistence_check(frame, law, u0: evolve.DelayHistory, lam_p, k_max, p=1, n_deriv=8, method="direct"):
    """||u_{kh}|| <= theta^{k+1} ||u_0|| for k <= k_max, and the derivative bound on (0, h]."""
    grid = u0.grid
    const = persistence_constants(frame, law, lam_p)
    W = weight(grid, lam_p, frame.nu)
    n0 = history_norm(u0, W, p)
    hyps = {"weighted_norm_finite": _hyp(np.isfinite(n0), norm0=n0)}
    if not hyps["weighted_norm_finite"]["pass"]:
        return _hypothesis_failure("persistence", hyps, const)
    st = evolve.make_stepper(frame, law, u0, method=method)
    m = u0.m
    seg = [max(weighted_norm(s, grid, W, p) for s in u0.slots)]
    cur = -math.inf
    deriv = []
    t_checks = set(int(round(m * f)) for f in np.linspace(1.0 / n_deriv, 1.0, n_deriv))
    dz = grid.spacing[0]
    for n in range(1, k_max * m + 1):
        st.step()
        cur = max(cur, weighted_norm(st.u, grid, W, p))
        if n in t_checks:
            wu = W * st.u
            g = np.gradient(wu, dz, axis=0)
            deriv.append((st.t, weighted_norm(g, grid, np.ones_like(g), p)))
        if n % m == 0:
            seg.append(cur)
            cur = weighted_norm(st.u, grid, W, p)
    th = const["theta"]
    k = np.arange(len(seg))
    bound = th ** (k + 1) * n0
    ok = np.array(seg) <= bound * (1 + 1e-12)
    db = [(t, v, (const["theta1"] / math.sqrt(t) + math.sqrt(t) * const["theta2"]) * n0) for t, v in deriv]
    dok = [v <= b_ * (1 + 1e-12) for _, v, b_ in db]
    checks = {"norm_bound": _hyp(bool(np.all(ok)), max_ratio=float(np.max(np.array(seg) / np.maximum(bound, 1e-300)))),
              "derivative_bound": _hyp(all(dok), max_ratio=max((v / max(b_, 1e-300) for _, v, b_ in db), default=0.0))}
    series = {"persistence": {"k": k.astype(float), "norm": np.array(seg), "bound": bound}}
    values = dict(const, norm0=n0, k_max=k_max, p=str(p))
    return _verdict("persistence", hyps, checks, None, None, values, series)


# ---------------------------------------------------------------------------
# speed selection


def level_position(x, v, beta, side="left"):
    """Extremal crossing of level beta by linear interpolation (nan if v never reaches beta).

    side="left": infimum of the level set (front with v small on the left);
    side="right": supremum.
    """
    if side == "right":
        p = level_position(-x[::-1], v[::-1], beta, "left")
        return -p
    above = np.nonzero(v >= beta)[0]
    if len(above) == 0:
        return math.nan
    i = above[0]
    if i == 0:
        return float(x[0])
    x0, x1, v0, v1 = x[i - 1], x[i], v[i - 1], v[i]
    return float(x0 + (beta - v0) * (x1 - x0) / (v1 - v0))


def speed_selection_experiment(frame, law, datum: evolve.DelayHistory, beta, T, c_expected=None,
                               side=None, sample_every=None, window=None, method="direct", tol=0.03):
    """Track the beta level set of the static-frame solution and fit its speed.

    The level set of a front invading toward -inf sits at m(t) ~ -c t; the
    report gives c_fit = -dm/dt and sup_t |c + m(t)/t| t on the window.
    """
    if frame.d != 1:
        raise DomainError("speed selection runs on a line")
    kappa = law.kappa
    hyps = {"beta_in_range": _hyp(0 < beta < kappa, beta=beta, kappa=kappa)}
    if not hyps["beta_in_range"]["pass"]:
        return _hypothesis_failure("speed_selection", hyps)
    static = frame.with_speed(0.0)
    grid = datum.grid
    x = grid.z
    v0 = datum.slots[-1]
    side = side or ("left" if v0[0] <= v0[-1] else "right")
    every = sample_every or max(1, datum.m // 4)
    ts, ms = [], []

    def probe(t, us):
        ts.append(t)
        ms.append(level_position(x, us[0], beta, side))

    st = evolve.make_stepper(static, law, datum, method=method)
    _lockstep([st], T, every, probe)
    t, mpos = np.array(ts), np.array(ms)
    lo, hi = window or default_window(t)
    sel = (t >= lo) & (t <= hi) & np.isfinite(mpos)
    edge_hit = np.any(np.isclose(mpos[sel], x[0])) or np.any(np.isclose(mpos[sel], x[-1]))
    checks = {"tracked": _hyp(int(sel.sum()) >= 20 and not edge_hit, samples=int(sel.sum()),
                              reached_boundary=bool(edge_hit))}
    values = {"first_appearance": float(t[np.isfinite(mpos)][0]) if np.any(np.isfinite(mpos)) else None,
              "side": side}
    if checks["tracked"]["pass"]:
        slope, icpt = np.polyfit(t[sel], mpos[sel], 1)
        c_fit = -float(slope)
        c_ref = c_expected if c_expected is not None else c_fit
        B = np.abs(c_ref * t[sel] + mpos[sel])
        n3 = max(1, len(B) // 3)
        early, late = float(np.max(B[:n3])), float(np.max(B[-n3:]))
        dz = grid.spacing[0]
        bounded = late <= 2.0 * early + 10 * dz
        values.update(c_fit=c_fit, direction="+inf" if slope > 0 else "-inf", offset_sup=float(np.max(B)),
                      offset_early=early, offset_late=late)
        checks["offset_bounded"] = _hyp(bounded, early=early, late=late)
        if c_expected is not None:
            rel = abs(c_fit - c_expected) / abs(c_expected)
            checks["speed"] = _hyp(rel <= tol, c_fit=c_fit, c_expected=c_expected, rel_error=rel)
    series = {"level_set": {"t": t, "m": mpos}}
    return _verdict("speed_selection", hyps, checks, None, None, values, series)
