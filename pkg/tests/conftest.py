import math

import numpy as np
import pytest

from semiwave import birth_laws, kernels, spectral

E18 = math.exp(1.8)
E15 = math.exp(1.5)


@pytest.fixture(scope="session")
def std_kernel():
    return kernels.gaussian(0.0, 1.0)


@pytest.fixture(scope="session")
def nich18():
    return birth_laws.nicholson(E18)


@pytest.fixture(scope="session")
def frame18(std_kernel, nich18):
    return spectral.FrameSpec(1, 0.0, 1.0, std_kernel, nich18)


def random_frames(n, seed=0):
    """(frame, lam) pairs with gaussian kernels and nicholson laws (Lip g = g'(0))."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k = kernels.gaussian(rng.uniform(-2, 2), rng.uniform(0.2, 3.0))
        law = birth_laws.nicholson(math.exp(rng.uniform(0.2, 2.0)))
        f = spectral.FrameSpec(1, rng.uniform(-3, 3), rng.uniform(0.1, 3.0), k, law)
        out.append((f, rng.uniform(-2, 2)))
    return out


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
