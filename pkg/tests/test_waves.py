import math

import numpy as np
import pytest
from scipy.integrate import quad

from semiwave import birth_laws as bl
from semiwave import evolve as E
from semiwave import kernels, spectral as S, waves as W
from semiwave.grid import EDGE, Field, Grid


def speed_frame(law, dc=0.5):
    f = S.FrameSpec(1, 0.0, 1.0, kernels.gaussian(0, 1), law)
    return f.with_speed(S.critical_speeds(f)[1] + dc)


@pytest.fixture(scope="module")
def mono():
    law = bl.nicholson(2.0, domain_cap=1.0)
    f = speed_frame(law)
    return f, law, W.compute_profile(f, law, dz=0.05)


@pytest.fixture(scope="module")
def nich():
    law = bl.nicholson(math.exp(1.8))
    f = speed_frame(law)
    return f, law, W.compute_profile(f, law, dz=0.05)


def test_monotone_profile(mono):
    f, law, pr = mono
    assert np.all(np.diff(pr.phi) >= -1e-12)
    assert pr.orientation == "left"
    assert float(pr(0.0)) == pytest.approx(law.kappa / 2, abs=1e-6)
    assert pr.phi[0] < 1e-4 and pr.phi[-1] == pytest.approx(law.kappa, abs=1e-4)
    assert W.classify(pr, law) == "monotone_front"


def test_profile_residual_refines(nich):
    f, law, pr = nich
    r1 = pr.meta["residual"]
    assert r1 <= 5e-3
    pr2 = W.compute_profile(f, law, dz=0.025)
    assert r1 / pr2.meta["residual"] >= 3.4


def test_residual_of_equilibria(nich):
    f, law, _ = nich
    g = Grid.line(-10, 10, 0.05, (EDGE, EDGE))
    for v, tol in ((law.kappa, 1e-10), (0.0, 1e-13)):
        pr = W.WaveProfile(Field(g, np.full(g.shape, v)), f.c, 1.0, 0, 1.0, "left")
        assert W.profile_residual(pr, f, law) < tol


def test_tail_rate(nich):
    f, law, pr = nich
    lam_d = W.discrete_rate(f, law, 0.05, pr.lam1)
    assert pr.meta["tail_rate_fit"] == pytest.approx(lam_d, rel=0.05)
    assert lam_d == pytest.approx(pr.lam1, rel=0.01)


def test_self_alignment(nich):
    f, law, pr = nich
    shifted = W.WaveProfile(Field(pr.grid.shifted(3.7), pr.phi.copy()), pr.c, pr.lam1, pr.j_c,
                            pr.amplitude, pr.orientation)
    s, d = W.align(pr, shifted)
    assert abs(abs(s) - 3.7) <= 0.005
    assert d < 1e-8


def test_stationarity(nich):
    f, law, pr = nich
    m = pr.meta["m"]
    tr = E.simulate(f, law, E.DelayHistory.constant(pr.grid, pr.phi, m, 1 / m), 10.0, store_fields=True)
    assert np.max(np.abs(tr.fields[-1].values - pr.phi)) < 1e-6


def test_seed_datum():
    g = Grid.line(-30, -1, 0.05)
    h = W.seed_datum(2.0, 0.8, 0, 1e-3, g, 1.0, 4, 0.25)
    assert np.allclose(h.slots[-1], 1e-3 * np.exp(0.8 * g.z), rtol=1e-14)
    assert all(np.array_equal(s, h.slots[0]) for s in h.slots)
    g2 = Grid.line(-30, 10, 0.05)
    h1 = W.seed_datum(2.0, 0.8, 1, 50.0, g2, 1.0, 1, 1.0).slots[-1]
    assert np.all(np.diff(h1) >= 0) and h1.max() == 1.0
    raw = 50.0 * np.abs(g2.z) * np.exp(0.8 * g2.z)
    left = g2.z < -1 / 0.8
    assert g2.z[left][np.argmax(raw[left])] == pytest.approx(-1 / 0.8, abs=0.05)
    # weighted norm of the pure exponential seed against e^{-lam z}, lam slightly above lam1
    lam = 0.85
    w = np.exp(-lam * g.z) * h.slots[-1]
    num = np.trapezoid(w, g.z)
    ref = quad(lambda z: 1e-3 * np.exp((0.8 - lam) * z), -30, -1)[0]
    assert num == pytest.approx(ref, rel=2e-3)


def test_embed_profile(nich):
    f, law, pr = nich
    F = W.embed_profile(pr, -60, 60)
    z = F.grid.z
    assert z[0] <= -60 and z[-1] >= 60
    inside = (z >= pr.z[0]) & (z <= pr.z[-1])
    assert np.allclose(F.values[inside], pr.phi, atol=1e-12)
    F2 = W.embed_profile(pr, -20, 20, transverse=(-5, 5, 0.5))
    assert F2.values.ndim == 2 and np.allclose(F2.values[:, 0], F2.values[:, -1])


def test_classify_constant():
    law = bl.nicholson(2.0)
    g = Grid.line(-10, 10, 0.1)
    pr = W.WaveProfile(Field(g, np.full(g.shape, law.kappa)), 1.0, 1.0, 0, 1.0, "left")
    assert W.classify(pr, law) == "monotone_front"
