import math
import time

import pytest

from princurve.distributions import PointSource
from princurve.optimizer import FitConfig, fit

GAUSS_RADIUS = math.sqrt(math.pi / 2)  # self-consistent circle for the standard 2-D gaussian

# lines collected by the acceptance suite and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def _timed_fit(source, cfg):
    start = time.perf_counter()
    res = fit(source, cfg)
    return res, time.perf_counter() - start


@pytest.fixture(scope="session")
def circle_fit():
    """Closed curve, uniform law on the unit circle, L = pi, n = 64."""
    cfg = FitConfig(length=math.pi, n_vertices=64, topology="closed", seed=1, n_samples=20000)
    return _timed_fit(PointSource.uniform_circle(1.0), cfg)


@pytest.fixture(scope="session")
def oned_fit():
    """Open curve, uniform law on [0, 1], L = 0.5, n = 16."""
    cfg = FitConfig(length=0.5, n_vertices=16, seed=2, n_samples=20000)
    return _timed_fit(PointSource.uniform_1d(), cfg)


@pytest.fixture(scope="session")
def square_fits():
    """Open curves on the uniform square, L = 3, n = 48, three seeds."""
    return [_timed_fit(PointSource.uniform_square(), FitConfig(length=3.0, n_vertices=48, seed=s)) for s in (0, 1, 2)]


@pytest.fixture(scope="session")
def gaussian_open_fit():
    """Open curve on the standard 2-D gaussian, L = 4, n = 48."""
    return _timed_fit(PointSource.gaussian(2), FitConfig(length=4.0, n_vertices=48, seed=3))


@pytest.fixture(scope="session")
def gaussian_closed_fit():
    """Closed curve on the standard 2-D gaussian with the self-consistent circle's length."""
    cfg = FitConfig(length=2 * math.pi * GAUSS_RADIUS, n_vertices=64, topology="closed", seed=3)
    return _timed_fit(PointSource.gaussian(2), cfg)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
