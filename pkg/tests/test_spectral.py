import math

import mpmath as mp
import numpy as np
import pytest

from conftest import random_frames
from semiwave import birth_laws as bl
from semiwave import kernels, spectral as S
from semiwave.errors import DomainError, LevelError, NotInSpeedSetError


def lin_frame(c=0.0, h=1.0, mu=0.0, var=1.0, r=2.0):
    return S.FrameSpec(1, c, h, kernels.gaussian(mu, var), bl.linear(r))


def test_pq_closed_form():
    f = lin_frame(c=1.5, h=0.7, mu=-0.5, var=2.0, r=3.0)
    lam = 0.4
    p, q = S.pq(f, lam)
    assert p == pytest.approx(lam**2 - 1.5 * lam - 1)
    assert q == pytest.approx(3.0 * math.exp(-lam * 1.5 * 0.7 + 0.5 * lam + lam**2), rel=1e-14)


def test_char_eval_kpp_limit():
    f = lin_frame(h=1e-6, var=1e-6)
    # tiny delay and kernel: E_c -> lam^2 - c lam + 1
    assert S.char_eval(f, 1.0, c=2.0) == pytest.approx(0.0, abs=1e-4)
    r = S.char_roots(f.with_speed(3.0))
    assert r.lam1 == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-4)
    assert r.lam2 == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-4)
    assert r.j_c == 0


def test_char_roots_properties(frame18):
    cm, cp = S.critical_speeds(frame18)
    f = frame18.with_speed(cp + 0.5)
    r = S.char_roots(f)
    assert 0 < r.lam1 < r.lam2
    for lam in (r.lam1, r.lam2):
        assert abs(S.char_eval(f, lam)) < 1e-10
    mid = np.linspace(r.lam1, r.lam2, 50)[1:-1]
    assert all(S.char_eval(f, x) < 0 for x in mid)
    assert S.leading_rate(r) == r.lam1
    # mirror side: negative roots
    rm = S.char_roots(frame18.with_speed(cm - 0.5))
    assert rm.lam1 < rm.lam2 < 0
    assert rm.lam1 == pytest.approx(-r.lam2, abs=1e-9)
    with pytest.raises(NotInSpeedSetError):
        S.char_roots(frame18.with_speed(cp - 1e-3))


def test_critical_speeds_symmetric_and_tangent(frame18):
    f = lin_frame()
    cm, cp = S.critical_speeds(f)
    assert cm == pytest.approx(-cp, abs=1e-8)
    lo, hi = S._search_window(f, cp)
    xs = np.linspace(max(lo, 0), hi, 20001)
    assert min(S.char_eval(f, x, cp) for x in xs) == pytest.approx(0.0, abs=1e-6)
    xs = np.linspace(0, hi, 20001)
    assert min(S.char_eval(f, x, cp - 1e-3) for x in xs) > 0


def test_critical_speeds_kpp():
    f = lin_frame(h=1e-6, var=1e-6)
    assert S.critical_speeds(f)[1] == pytest.approx(2.0, abs=1e-2)
    f3 = lin_frame(h=1e-6, var=1e-6, r=5.0)
    assert S.critical_speeds(f3)[1] == pytest.approx(4.0, abs=1e-2)


def test_critical_speeds_needs_monostable():
    with pytest.raises(DomainError):
        S.critical_speeds(lin_frame(r=0.9))


def mp_gamma(mu, var, h, c, r, lam):
    # mgf convention: int K(y) e^{-lam y} dy
    mp.mp.dps = 40
    p = mp.mpf(lam) ** 2 - c * lam - 1
    q = r * mp.e ** (-lam * c * h - mu * lam + var * lam**2 / 2)
    return mp.findroot(lambda g: g + p + q * mp.e ** (h * g), -p)


@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0, 1.7, 6.0, 0.8), (-5.0, 2.0, 2.0, 0.5, 2.0, 0.3),
                                  (1.0, 0.5, 0.3, -1.0, 3.0, -0.6)])
def test_gamma_lambda_oracle(args):
    mu, var, h, c, r, lam = args
    f = lin_frame(c, h, mu, var, r)
    assert S.gamma_lambda(f, lam) == pytest.approx(float(mp_gamma(*args)), abs=1e-12)


def test_gamma_residual_and_sign():
    for f, lam in random_frames(20, seed=1):
        p, q = S.pq(f, lam)
        g = S.gamma_lambda(f, lam)
        assert abs(g + p + q * math.exp(f.h * g)) < 1e-12 * max(1.0, abs(p), q)
        E = S.char_eval(f, lam)
        if abs(E) > 1e-10:
            assert np.sign(g) == -np.sign(E)


def test_a_lambda():
    f = lin_frame(c=1.0, h=1.0, r=2.0)
    for lam in (0.3, 0.9):
        assert S.a_lambda(f, lam) * math.sqrt(4 * math.pi * S.eps_h(f, lam)) == pytest.approx(1.0, rel=1e-12)
    # gamma=0, h=1, q=1 gives eps=1/2
    assert (1 / (4 * math.pi * 0.5)) ** 0.5 == pytest.approx(0.3989, abs=1e-4)
    k2 = kernels.tensor_product([kernels.gaussian(0, 1), kernels.gaussian(0, 1)])
    f2 = S.FrameSpec(2, 1.0, 1.0, k2, bl.linear(2.0))
    e = S.eps_h(f2, 0.5)
    assert S.a_lambda(f2, 0.5) == pytest.approx(1 / (4 * math.pi * e), rel=1e-12)


def test_a_lambda_substitution():
    # lam chosen so that gamma=0 and q=1 with h=1: then A = 1/sqrt(2 pi)
    f = lin_frame(c=0.0, h=1.0, r=1.0, var=1e-12)
    # q = e^{lam^2 var/2} ~ 1; p = lam^2 - 1 = -1 at lam=0 -> gamma: g - 1 + e^g = 0 -> g=0
    assert S.gamma_lambda(f, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert S.a_lambda(f, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-10)


def test_l_lambda_zero_and_asymptotics():
    for f, lam in random_frames(10, seed=2):
        assert S.l_lambda(f, lam, 0.0) == pytest.approx(-S.gamma_lambda(f, lam), abs=1e-10)
    f = lin_frame(c=1.0, h=1.0, r=2.0)
    p, _ = S.pq(f, 0.5)
    assert S.l_lambda(f, 0.5, 100.0) == pytest.approx(-1e4 + p, rel=1e-3)


def test_l_lambda_upper_bound_and_monotone():
    for f, lam in random_frames(10, seed=3):
        zs = np.linspace(0, 10, 128)
        ls = np.array([S.l_lambda(f, lam, z) for z in zs])
        hi = np.array([S.loge_bounds(f, lam, z)[1] for z in zs])
        assert np.all(ls <= hi + 1e-10)
        assert np.all(np.diff(ls) <= 1e-12)


def test_gamma_star():
    assert S.gamma_star(0.0, 1.0) == pytest.approx(1.0, abs=1e-10)
    assert S.gamma_star(1.0, 1.0) is None
    mp.mp.dps = 40
    ref = mp.findroot(lambda g: 0.5 * mp.e**g - (1 - g) * (1 - mp.mpf("1e-9")), 0.3)
    assert S.gamma_star(0.5, 1.0) == pytest.approx(float(ref), abs=1e-12)
    assert S.gamma_star(0.5, 1.0, gamma_cap=0.1) == 0.1


def test_delta_star():
    assert S.delta_star(0.0, 1.0, 1) == pytest.approx(2.0 + 1e-3, abs=1e-12)
    d1 = S.delta_star(0.99, 1.0, 1)
    d2 = S.delta_star(0.99, 1.0, 2)
    assert d2 >= d1
    t = -1.0 + np.geomspace(1e-6, 1e6, 500)
    assert np.all(S._delta_ineq(d1, 0.99, 1.0, 1, t) < 1)
    with pytest.raises(DomainError):
        S.delta_star(1.0, 1.0, 1)


def test_b_gamma_examples():
    law = bl.nicholson(math.exp(1.8))
    f = S.FrameSpec(1, 0.0, 1.0, kernels.uniform(), law)
    assert S.b_gamma({"z_plus": 0.0}, f, 0.0) == pytest.approx(1.0)
    # level 1/2 -> median of a symmetric kernel
    r = 2 * 0.2 * math.exp(-0.2)
    fm = S.FrameSpec(1, 0.0, 1.0, kernels.gaussian(0, 1), bl.linear(r))
    assert S.b_gamma({"z_plus": 0.0}, fm, 0.2) == pytest.approx(0.0, abs=1e-9)
    fa = S.FrameSpec(1, 0.0, 2.0, kernels.gaussian(-5, 2), bl.linear(2.0))
    mp.mp.dps = 30
    level = 0.1 * mp.e ** (-0.2) / 2
    ref = mp.findroot(lambda a: mp.erfc((a + 5) / 2) / 2 - level, -3)
    assert S.b_gamma({"z_plus": 0.0}, fa, 0.1) == pytest.approx(float(ref), abs=1e-8)
    with pytest.raises(LevelError):
        S.b_gamma({"z_plus": 0.0}, fm, 0.0)


def test_spectral_report(frame18):
    cp = S.critical_speeds(frame18)[1]
    f = frame18.with_speed(cp + 0.5)
    rep = S.spectral_report(f, 1.0, roots=True, speeds=True).as_dict()
    assert rep["c_star_plus"] == pytest.approx(cp)
    assert rep["gamma_lambda"] == pytest.approx(S.gamma_lambda(f, 1.0))
    assert rep["lambda_1"] < 1.0 < rep["lambda_2"]
