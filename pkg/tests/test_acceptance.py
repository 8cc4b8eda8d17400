"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the pytest terminal summary (see conftest.py) and
when the file is run directly: python3 tests/test_acceptance.py
"""

import functools
import math
import time

import numpy as np
from scipy.optimize import brentq

from semiwave import birth_laws as bl
from semiwave import evolve as E
from semiwave import kernels, spectral as S, stability_lab as L, waves as W
from semiwave.errors import DomainError
from semiwave.grid import EDGE, Grid

RESULTS = {}
E18 = math.exp(1.8)
E15 = math.exp(1.5)


def criterion(n, title):
    def deco(fn):
        @functools.wraps(fn)
        def run(*a, **kw):
            t0 = time.perf_counter()
            try:
                ok, detail = fn(*a, **kw)
            except Exception as e:
                RESULTS[n] = (title, False, f"error: {e!r}", time.perf_counter() - t0)
                raise
            RESULTS[n] = (title, bool(ok), detail, time.perf_counter() - t0)
            assert ok, detail
        return run
    return deco


def summary_lines():
    out = []
    for n in sorted(RESULTS):
        title, ok, detail, dt = RESULTS[n]
        out.append(f"criterion {n!s:>4} {'PASS' if ok else 'FAIL'} [{dt:6.1f} s] {title}: {detail}")
    return out


def std_frame(law, c=0.0):
    return S.FrameSpec(1, c, 1.0, kernels.gaussian(0, 1), law)


def m_for(dz, h=1.0):
    return int(math.ceil(h / (0.9 * dz * dz)))


# ---------------------------------------------------------------------------
# spectral criteria


@criterion(1, "asymmetric-kernel critical speeds")
def test_c01_asymmetric_speeds():
    t0 = time.perf_counter()
    found, notes = [], []
    for reading in ("heat", "literal"):
        f = S.FrameSpec(1, 0.0, 2.0, kernels.asymmetric_example(5.0, reading), bl.linear(2.0))
        try:
            cm, cp = S.critical_speeds(f)
        except DomainError as e:
            notes.append(f"{reading}: degenerate ({e})")
            continue
        mags = sorted((abs(cm), abs(cp)))
        ok = abs(mags[0] - 0.7) <= 0.1 and abs(mags[1] - 2.7) <= 0.1
        found.append(ok)
        notes.append(f"{reading}: c*-={cm:.5f} c*+={cp:.5f}")
    dt = time.perf_counter() - t0
    return any(found) and dt < 5, "; ".join(notes) + f"; {dt:.2f} s"


@criterion(2, "symmetric reduction c*- = -c*+")
def test_c02_symmetric():
    t0 = time.perf_counter()
    cm, cp = S.critical_speeds(std_frame(bl.linear(2.0)))
    dt = time.perf_counter() - t0
    return abs(cm + cp) <= 1e-8 and dt < 5, f"c*+={cp:.12f} c*- + c*+ = {cm + cp:.2e}"


@criterion(3, "KPP limit c*+ -> 2 sqrt(g'(0) - 1)")
def test_c03_kpp():
    t0 = time.perf_counter()
    f = S.FrameSpec(1, 0.0, 1e-6, kernels.gaussian(0, 1e-6), bl.linear(2.0))
    cp = S.critical_speeds(f)[1]
    dt = time.perf_counter() - t0
    return abs(cp - 2.0) <= 0.01 and dt < 5, f"c*+={cp:.6f}"


def random_frame(rng):
    k = kernels.gaussian(rng.uniform(-2, 2), rng.uniform(0.2, 3.0))
    law = bl.nicholson(math.exp(rng.uniform(0.2, 2.0)))
    return S.FrameSpec(1, rng.uniform(-3, 3), rng.uniform(0.1, 3.0), k, law), rng.uniform(-2, 2)


def majorant_l(frame, lam, zeta):
    """Root of l + |zeta|^2 - p - q e^{-hl} = 0 (qhat replaced by its value at 0)."""
    p, q = S.pq(frame, lam)
    g = S.gamma_lambda(frame, lam)
    f = lambda l: l + zeta**2 - p - q * math.exp(-frame.h * l)
    # f(p - zeta^2 - 1) < 0 and f(1 - gamma) > 0
    return brentq(f, p - zeta**2 - 1.0, 1.0 - g, xtol=1e-14, rtol=1e-15)


@criterion(4, "spectral identities on 100 random frames")
def test_c04_spectral_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    zetas = np.linspace(0.0, 10.0, 512)
    res_max, sign_bad, l0_max = 0.0, 0, 0.0
    slack_lo, slack_hi, slack_major = math.inf, math.inf, math.inf
    for _ in range(100):
        f, lam = random_frame(rng)
        p, q = S.pq(f, lam)
        g = S.gamma_lambda(f, lam)
        # residual relative to the size of the terms of the equation
        res_max = max(res_max, abs(g + p + q * math.exp(f.h * g)) / max(1.0, abs(p), abs(g)))
        Ec = S.char_eval(f, lam)
        if abs(Ec) > 1e-10 and np.sign(g) != -np.sign(Ec):
            sign_bad += 1
        l0_max = max(l0_max, abs(S.l_lambda(f, lam, 0.0) + g))
        eps = S.eps_h(f, lam)
        for z in zetas:
            lo, hi = S.loge_bounds(f, lam, z)
            l = S.l_lambda(f, lam, z)
            slack_lo = min(slack_lo, l - lo)
            slack_hi = min(slack_hi, hi - l)
        for z in zetas[::16]:
            slack_major = min(slack_major, majorant_l(f, lam, z) + eps * z * z + g)
    dt = time.perf_counter() - t0
    ok = res_max < 1e-12 and sign_bad == 0 and l0_max < 1e-10 and min(slack_lo, slack_hi) >= -1e-10 and dt < 30
    return ok, (f"residual {res_max:.1e}, sign mismatches {sign_bad}, |l(0)+gamma| {l0_max:.1e}, "
                f"sandwich slack lower {slack_lo:.3g} upper {slack_hi:.3g} "
                f"(majorant lower slack {slack_major:.3g}), {dt:.1f} s")


# ---------------------------------------------------------------------------
# comparison bound


def critical_setup(dz, m_profile):
    law = bl.nicholson(E18)
    f = std_frame(law)
    c, lam = W.scheme_critical(f, law, dz)
    f = f.with_speed(c)
    pr = W.compute_profile(f, law, dz=dz, m=m_profile, roots=S.RootReport(lam, lam, 1))
    return law, f, pr


@criterion(5, "comparison-bound domination and t^-1/2 decay (d=1)")
def test_c05_domination_1d():
    t0 = time.perf_counter()
    dz = 0.05
    law, f, pr = critical_setup(dz, 50)
    lam = pr.lam1
    F = W.embed_profile(pr, -60, 60)
    g = F.grid
    m = m_for(dz)
    pert = 1e-2 * math.exp(-20 * lam) * L.gaussian_bump(g, -20.0)
    u0 = E.DelayHistory.constant(g, F.values + pert, m, 1 / m)
    p0 = E.DelayHistory.constant(g, F.values, m, 1 / m)
    v = L.comparison_experiment(f, law, u0, p0, lam, 60.0)
    dt = time.perf_counter() - t0
    a = v.fit.alpha
    ok = v.passed and v.domination >= 0.999 and 0.35 <= a <= 0.65 and v.fit.pinned == {"gamma": 0.0} and dt < 300
    return ok, (f"c={f.c:.6f} lam={lam:.6f} domination {v.domination:.5f}, alpha {a:.3f}, "
                f"domain [{g.z[0]:.1f}, {g.z[-1]:.1f}]")


@criterion(6, "dimension exponent alpha ~ d/2 (d=2 planar)")
def test_c06_dimension_two():
    t0 = time.perf_counter()
    dz = 0.5
    law, f, pr = critical_setup(dz, 20)
    lam = pr.lam1
    n = 256
    z0 = pr.z[0]
    lo = z0 - int(round((z0 + 64) / dz)) * dz
    fill = pr.grid.boundary_fill[0]
    k = f.kernel
    f2 = S.FrameSpec(2, f.c, 1.0, kernels.tensor_product([k, k]), law)
    g = Grid(((lo, lo + (n - 1) * dz), (-63.75, 63.75)), (dz, dz), (fill, (EDGE, EDGE)))
    assert g.shape == (n, n)
    X, Y = g.mesh()
    phi = np.broadcast_to(pr(g.axis(0))[:, None], g.shape).copy()
    m = int(math.ceil(1.0 / (0.95 * 2 / (4 / dz**2 + 1))))
    pert = 1e-2 * math.exp(-20 * lam) * np.exp(-((X + 20) ** 2 + Y**2) / 2)
    u0 = E.DelayHistory.constant(g, phi + pert, m, 1 / m)
    p0 = E.DelayHistory.constant(g, phi, m, 1 / m)
    v = L.comparison_experiment(f2, law, u0, p0, lam, 150.0)
    dt = time.perf_counter() - t0
    a = v.fit.alpha
    ok = v.passed and 0.75 <= a <= 1.25 and dt < 1200
    return ok, f"256x256, dz={dz}, domination {v.domination:.5f}, alpha {a:.3f}"


# ---------------------------------------------------------------------------
# stability of the front


def front(c_offset=None, dz=0.05):
    law = bl.nicholson(E18)
    f = std_frame(law)
    if c_offset is None:
        c, lam = W.scheme_critical(f, law, dz)
        f = f.with_speed(c)
        roots = S.RootReport(lam, lam, 1)
    else:
        f = f.with_speed(S.critical_speeds(f)[1] + c_offset)
        roots = S.char_roots(f)
        lam = L.best_rate(f, roots)
    pr = W.compute_profile(f, law, dz=dz, m=50, roots=roots)
    return law, f, roots, lam, pr


@criterion(7, "non-critical exponential stability, rate >= 0.8 gamma*")
def test_c07_exponential():
    t0 = time.perf_counter()
    law, f, roots, lam, pr = front(0.5)
    F = W.embed_profile(pr, -40, 40)
    g = F.grid
    m = m_for(0.05)
    u = F.values * (1 + 0.5 * L.bump(g, 2.0, 3.0)) + 0.3 * L.bump(g, 15.0, 5.0)
    v = L.global_stability_experiment(f, law, pr, lam, E.DelayHistory.constant(g, u, m, 1 / m), 40.0)
    rho = bl.analyze(law).rho
    gs = S.gamma_star(rho, f.h)
    dt = time.perf_counter() - t0
    rate = v.fit.gamma
    ok = v.passed and gs is not None and rate >= 0.8 * gs and roots.lam1 < lam < roots.lam2 and dt < 300
    return ok, f"lam={lam:.4f} in ({roots.lam1:.4f}, {roots.lam2:.4f}), rate {rate:.3f} vs gamma* {gs:.3f}"


def critical_global(datum, T=200.0):
    law, f, roots, lam, pr = front(None)
    F = W.embed_profile(pr, -60, 40)
    g = F.grid
    z = g.z
    m = m_for(0.05)
    if datum == "spread":
        # weighted mass spread over the leading edge, tapered to zero near the boundary and at z=0
        s = np.clip((z - z[0]) / 10, 0, 1) * np.clip(-z / 5, 0, 1)
        s = s**2 * (3 - 2 * s)
        u = F.values + 0.05 * np.exp(lam * np.minimum(z, 0)) * s
    else:
        u = F.values * (1 + 0.5 * L.bump(g, 2.0, 3.0)) + 0.3 * L.bump(g, 15.0, 5.0)
    v = L.global_stability_experiment(f, law, pr, lam, E.DelayHistory.constant(g, u, m, 1 / m), T)
    return f, v


@criterion(8, "critical algebraic stability, alpha in [0.35, 0.65]")
def test_c08_algebraic():
    t0 = time.perf_counter()
    T = 200.0
    f, v = critical_global("spread", T)
    dt = time.perf_counter() - t0
    a = v.fit.alpha
    lo, hi = v.fit.window
    ok = (v.passed and 0.35 <= a <= 0.65 and v.fit.pinned == {"gamma": 0.0}
          and abs(lo - 0.4 * T) < 1 and abs(hi - 0.95 * T) < 1 and dt < 600)
    return ok, f"c={f.c:.6f}, window [{lo:.0f}, {hi:.0f}], alpha {a:.3f}"


def test_c08_localized_datum_reported():
    """Localized perturbation: reported only (decays faster than the t^-1/2 bound)."""
    f, v = critical_global("localized")
    RESULTS[8.5] = ("critical stability, localized datum (reported only)", True,
                    f"alpha {v.fit.alpha:.3f}", 0.0)


@criterion(9, "super/sub-solution signs at two resolutions")
def test_c09_subsuper():
    t0 = time.perf_counter()
    law = bl.nicholson(2.0, domain_cap=1.0)
    f = std_frame(law)
    f = f.with_speed(S.critical_speeds(f)[1] + 0.5)
    box = L.gg_box(law, 0.05, 1.0)
    ok, notes = True, []
    for dz in (0.1, 0.05):
        pr = W.compute_profile(f, law, dz=dz)
        for sign in (1, -1):
            q = 0.5 * (box["q_upper"] if sign > 0 else box["q_lower"])
            v = L.subsuper_check(f, law, pr, q, 0.05, sign=sign)
            ok &= v.passed and v.domination >= 0.999
            notes.append(f"dz={dz} {'+' if sign > 0 else '-'}: {v.domination:.4f}")
    dt = time.perf_counter() - t0
    return ok and dt < 180, ", ".join(notes)


@criterion(10, "squeeze into [m_g - eps, M_g + eps], entry stable under refinement")
def test_c10_squeeze():
    t0 = time.perf_counter()
    law = bl.nicholson(E15)
    f = std_frame(law)
    f = f.with_speed(S.critical_speeds(f)[1])
    entries, ok = [], True
    for dz in (0.1, 0.05):
        g = Grid.line(-40, 60, dz, (0.0, EDGE))
        m = m_for(dz)
        u = np.where(g.z >= 0, 0.1, 0.0)
        v = L.squeeze_experiment(f, law, E.DelayHistory.constant(g, u, m, 1 / m), 0.05, 40.0,
                                 sample_every=m // 10)
        ok &= v.passed
        entries.append(v.values["T_eps"])
    dt = time.perf_counter() - t0
    rel = abs(entries[0] - entries[1]) / entries[1]
    return ok and rel <= 0.1 and dt < 300, f"entry times {entries[0]:.3f}, {entries[1]:.3f} (rel {rel:.3f})"


@criterion(11, "persistence ||u_kh|| <= theta^(k+1) ||u_0||, k <= 5")
def test_c11_persistence():
    t0 = time.perf_counter()
    law = bl.nicholson(E18)
    f = std_frame(law)
    f = f.with_speed(S.critical_speeds(f)[1] + 0.5)
    lam_p = S.char_roots(f).lam1 / 2
    dz = 0.05
    g = Grid.line(-40, 40, dz)
    m = m_for(dz)
    v = L.persistence_check(f, law, E.DelayHistory.constant(g, L.bump(g, 0.0, 5.0), m, 1 / m), lam_p, 5)
    dt = time.perf_counter() - t0
    r = v.checks["norm_bound"]["max_ratio"]
    return v.passed and dt < 120, f"theta {v.values['theta']:.4g}, max norm/bound {r:.3g}"


@criterion(12, "uniqueness modulo translation")
def test_c12_uniqueness():
    t0 = time.perf_counter()
    law = bl.nicholson(E18)
    f = std_frame(law)
    f = f.with_speed(S.critical_speeds(f)[1] + 0.5)
    a = W.compute_profile(f, law, dz=0.05)
    b = W.compute_profile(f, law, dz=0.05, amplitude=5.0)
    gz = W.profile_grid(f, law, S.char_roots(f), 40.0, 0.05, 1.0, 1e-10).z
    step = law.kappa * 0.5 * (1 + np.tanh(2 * (gz - 3)))
    d = W.compute_profile(f, law, dz=0.05, seed=step)
    s1, d1 = W.align(a, b)
    s2, d2 = W.align(a, d)
    dt = time.perf_counter() - t0
    return max(d1, d2) <= 1e-3 and dt < 300, f"distances {d1:.2e} (shift {s1:.3f}), {d2:.2e} (shift {s2:.3f})"


@criterion(13, "speed selection by the datum's tail rate")
def test_c13_speed_selection():
    t0 = time.perf_counter()
    law = bl.nicholson(E18)
    f = std_frame(law)
    cp = S.critical_speeds(f)[1] + 1.0
    lam = S.char_roots(f.with_speed(cp)).lam1
    dz = 0.1
    g = Grid.line(-150, 30, dz, (("exp", lam), EDGE))
    m = m_for(dz)
    u = np.minimum(law.kappa, 1e-2 * np.exp(lam * g.z))
    v = L.speed_selection_experiment(f, law, E.DelayHistory.constant(g, u, m, 1 / m), law.kappa / 2, 40.0,
                                     c_expected=cp)
    dt = time.perf_counter() - t0
    c_fit = v.values.get("c_fit", math.nan)
    rel = abs(c_fit - cp) / cp
    ok = v.passed and rel <= 0.03 and v.checks["offset_bounded"]["pass"] and dt < 300
    return ok, f"c'={cp:.4f}, fitted {c_fit:.4f} (rel {rel:.4f}), offset sup {v.values.get('offset_sup', math.nan):.3f}"


# ---------------------------------------------------------------------------
# numerical hygiene


def _bump_run(dz, T=2.0):
    law = bl.nicholson(E18)
    g = Grid.line(-16, 16, dz, (0.0, 0.0))
    m = m_for(dz)
    tr = E.simulate(std_frame(law, 0.9), law, E.DelayHistory.constant(g, np.exp(-g.z**2 / 4), m, 1 / m), T,
                    store_fields=True, method="direct")
    return tr.fields[-1].values


@criterion(14, "numerical hygiene")
def test_c14_hygiene():
    law = bl.nicholson(E18)
    f = std_frame(law, 1.3)
    dz = 0.1
    g = Grid.line(-10, 10, dz, (EDGE, EDGE))
    m = m_for(dz)
    dev = 0.0
    for v0 in (0.0, law.kappa):
        tr = E.simulate(f, law, E.DelayHistory.constant(g, v0, m, 1 / m), 10.0,
                        probes={"d": lambda t, u, v0=v0: float(np.max(np.abs(u - v0)))})
        dev = max(dev, float(tr.probes["d"].max()))
    g64 = Grid.line(-6.3, 6.3, 0.2, (EDGE, 0.0))
    u0 = law.kappa * np.random.default_rng(0).uniform(0, 1, 64)
    ends = [E.simulate(f, law, E.DelayHistory.constant(g64, u0, 8, 1 / 8), 2.0, store_fields=True,
                       method=meth).fields[-1].values for meth in ("fft", "direct")]
    fft_err = float(np.max(np.abs(ends[0] - ends[1])))
    u1, u2, u4 = _bump_run(0.4), _bump_run(0.2), _bump_run(0.1)
    order = math.log2(np.max(np.abs(u1 - u2[::2])) / np.max(np.abs(u2[::2] - u4[::4])))
    same = np.array_equal(_bump_run(0.2), u2)
    ok = dev <= 1e-10 and fft_err <= 1e-10 and order >= 1.7 and same
    return ok, (f"equilibrium drift {dev:.1e}, fft-direct {fft_err:.1e}, order {order:.2f}, "
                f"bit-identical {same}")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn()
            except AssertionError:
                pass
    print("\n".join(summary_lines()))
