import math

import numpy as np
import pytest

from semiwave import birth_laws as bl
from semiwave import evolve as E
from semiwave import kernels, spectral as S, stability_lab as L, waves as W
from semiwave.errors import DomainError
from semiwave.grid import EDGE, Grid

DZ = 0.1
M = int(math.ceil(1 / (0.9 * DZ * DZ)))


@pytest.fixture(scope="module")
def setup15():
    law = bl.nicholson(math.exp(1.5))
    f = S.FrameSpec(1, 0.0, 1.0, kernels.gaussian(0, 1), law)
    f = f.with_speed(S.critical_speeds(f)[1] + 0.5)
    r = S.char_roots(f)
    pr = W.compute_profile(f, law, dz=DZ, half_width=20)
    return f, law, r, pr


def hist(grid, v):
    return E.DelayHistory.constant(grid, v, M, 1 / M)


def test_decay_fit_exact():
    t = np.linspace(10, 100, 200)
    fit = L.decay_fit((t, 5 * t**-0.5 * np.exp(-0.3 * t)), (10, 100))
    assert (fit.C, fit.alpha, fit.gamma) == pytest.approx((5, 0.5, 0.3), abs=1e-6)
    assert fit.residual < 1e-10 and fit.n == 200
    fit = L.decay_fit(np.column_stack([t, 1 / t]), (10, 100), pin_gamma=0.0)
    assert fit.alpha == pytest.approx(1.0, abs=1e-8)
    assert fit.pinned == {"gamma": 0.0}
    fit = L.decay_fit((t, 2 * np.exp(-0.7 * t)), (10, 100), pin_alpha=0.0)
    assert fit.gamma == pytest.approx(0.7, abs=1e-10)
    assert fit(50.0) == pytest.approx(2 * math.exp(-35), rel=1e-8)


def test_decay_fit_noise():
    rng = np.random.default_rng(7)
    t = np.linspace(10, 100, 200)
    for _ in range(100):
        v = t**-0.5 * (1 + 0.01 * rng.standard_normal(t.size))
        assert L.decay_fit((t, v), (10, 100), pin_gamma=0.0).alpha == pytest.approx(0.5, abs=0.05)


def test_decay_fit_errors():
    t = np.linspace(1, 10, 50)
    with pytest.raises(DomainError):
        L.decay_fit((t, -np.ones_like(t)))
    with pytest.raises(DomainError):
        L.decay_fit((t[:10], np.ones(10)))
    with pytest.raises(DomainError):
        L.decay_fit((t, np.ones_like(t)), (5, 5))


def test_window_shift_spread():
    t = np.linspace(1, 100, 400)
    v = 3 * t**-1.5
    assert L.window_shift_spread((t, v), (40, 80), "alpha", pin_gamma=0.0) < 1e-10


def test_helpers():
    g = Grid.line(-5, 5, 0.5)
    assert np.allclose(L.weight(g, 0.5), np.exp(-0.5 * g.z))
    assert np.allclose(L.bounded_weight(g, 0.5), np.maximum(1, np.exp(-0.5 * g.z)))
    assert np.allclose(L.eta(g.z, 0.5), np.minimum(1, np.exp(0.5 * g.z)))
    assert L.weighted_norm(np.ones(g.shape), g, np.ones(g.shape), np.inf) == 1.0
    assert L.weighted_norm(np.ones(g.shape), g, np.ones(g.shape), 1) == pytest.approx(21 * 0.5)
    b = L.bump(g, 0.0, 2.0)
    assert b.max() == 1.0 and np.all(b[np.abs(g.z) >= 2] == 0)
    assert np.all(L.bump(g, 0.0, 0.0) == 0)
    v = np.array([0.0, 0.2, 0.6, 1.0])
    x = np.array([0.0, 1.0, 2.0, 3.0])
    assert L.level_position(x, v, 0.4) == pytest.approx(1.5)
    assert math.isnan(L.level_position(x, v, 2.0))
    assert L.level_position(x, v[::-1], 0.4, "right") == pytest.approx(1.5)
    h = hist(g, np.where(g.z >= 0, 0.1, 0.0))
    assert L.ic_check(h, 0.0) == (0.1, True)
    assert L.ic_check(h, 0.0, "right")[1] is False


def test_comparison_identical_data(setup15):
    f, law, r, pr = setup15
    P = hist(pr.grid, pr.phi)
    v = L.comparison_experiment(f, law, P, P, 0.5 * (r.lam1 + r.lam2), 10.0)
    assert v.passed


def test_comparison_rejects_negative_data(setup15):
    f, law, r, pr = setup15
    P = hist(pr.grid, pr.phi)
    v = L.comparison_experiment(f, law, hist(pr.grid, pr.phi - 1.0), P, r.lam1, 10.0)
    assert not v.passed and v.reason.startswith("hypothesis failed")
    assert v.hypotheses["data_admissible"]["pass"] is False


def test_global_with_profile_datum(setup15):
    f, law, r, pr = setup15
    v = L.global_stability_experiment(f, law, pr, L.best_rate(f, r), hist(pr.grid, pr.phi), 10.0)
    assert v.passed


def test_local_zero_perturbation_and_hypothesis_failure(setup15):
    f, law, r, pr = setup15
    lam = 0.5 * (r.lam1 + r.lam2)
    v = L.local_stability_experiment(f, law, pr, lam, 0.1, 10.0, width=0.0, m=M)
    assert v.passed and v.values["perturbation_sup"] == 0.0
    bad = L.local_stability_experiment(f, law, pr, lam, 1.5, 10.0)
    assert not bad.passed and "rho_eps_below_one" in bad.reason


def test_squeeze_trivial_and_envelope(setup15):
    f, law, r, pr = setup15
    g = Grid.line(-20, 20, DZ, (EDGE, EDGE))
    v = L.squeeze_experiment(f, law, hist(g, law.kappa), 0.05, 10.0)
    assert v.passed and v.values["T_eps"] == 0.0
    v = L.squeeze_experiment(f, law, hist(g, 3 * law.kappa), 0.05, 10.0)
    assert v.passed and v.checks["upper_envelope"]["max_excess"] <= 1e-6


def test_persistence_trivial_and_linear(setup15):
    f, law, r, pr = setup15
    g = Grid.line(-10, 10, DZ, (EDGE, EDGE))
    v = L.persistence_check(f, law, hist(g, 0.0), r.lam1 / 2, 3)
    assert v.passed and np.all(v.series["persistence"]["norm"] == 0)
    v = L.persistence_check(f, bl.linear(2.0), hist(g, 1.0), 0.3, 3, p=np.inf)
    assert v.passed and v.checks["norm_bound"]["max_ratio"] < 1


def test_speed_selection_on_profile(setup15):
    f, law, r, pr = setup15
    F = W.embed_profile(pr, -80, 20)
    v = L.speed_selection_experiment(f, law, hist(F.grid, F.values), law.kappa / 2, 20.0, c_expected=f.c)
    assert v.passed and v.values["direction"] == "-inf"
    assert v.values["c_fit"] == pytest.approx(f.c, rel=1e-2)
    bad = L.speed_selection_experiment(f, law, hist(F.grid, F.values), 5.0, 5.0)
    assert not bad.passed and "beta_in_range" in bad.reason


def test_gg_box_monotone():
    law = bl.nicholson(2.0, domain_cap=1.0)
    b = L.gg_box(law, 0.05, 1.0)
    assert b["q_lower"] > 0 and b["q_upper"] > 0
    assert b["gamma_star"] is not None and b["gamma_star"] >= 0.05
    assert b["lip_box"] < 1
    # direct re-check of the lower window on a coarse sample
    u = np.linspace(law.kappa - b["delta"], law.kappa + b["delta"], 50)
    q = b["q_lower"]
    assert np.all(law(u) - law(u - q * math.exp(0.05)) <= q * 0.9 + 1e-12)


def test_subsuper_zero_q():
    law = bl.nicholson(2.0, domain_cap=1.0)
    f = S.FrameSpec(1, 0.0, 1.0, kernels.gaussian(0, 1), law)
    f = f.with_speed(S.critical_speeds(f)[1] + 0.5)
    pr = W.compute_profile(f, law, dz=DZ, half_width=20)
    v = L.subsuper_check(f, law, pr, 0.0, 0.05)
    assert v.passed
