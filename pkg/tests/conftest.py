import numpy as np
import pytest
from hypothesis import settings

from randwave.spectral import Lattice, SpectrumPair

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_spectrum(rng, n_max, s=0.0, decay=0.0, lattice=None):
    """Gaussian coefficients scaled by <n>^-decay (zero modes included)."""
    lat = Lattice.ball(n_max) if lattice is None else lattice
    m = len(lat)
    w = (1.0 + lat.abs_n ** 2) ** (-0.5 * decay)
    return SpectrumPair(s, n_max, lat, rng.standard_normal(2),
                        rng.standard_normal((2, m)) * w, rng.standard_normal((2, m)) * w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- acceptance reporting -----------------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """``report(n, title, ok, detail, elapsed, budget)`` records one
    PASS/FAIL line for criterion ``n`` and fails the test unless it passed
    within its time budget."""
    def report(n, title, ok, detail, elapsed, budget):
        in_time = elapsed <= budget
        verdict = "PASS" if (ok and in_time) else "FAIL"
        line = (f"{verdict} criterion {n:2d} ({title}): {detail}; "
                f"{elapsed:.1f}s of {budget:.0f}s")
        ACCEPTANCE_LINES[n] = line
        print(line)
        assert ok, line
        assert in_time, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
