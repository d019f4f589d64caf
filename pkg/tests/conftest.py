import os
import sys
import warnings

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from glkpz.ensemble import CoefficientCache, DegenerateKPZWarning
from glkpz.potential import gaussian_potential, perturbed_potential


@pytest.fixture(scope="session")
def gauss():
    return gaussian_potential()


@pytest.fixture(scope="session")
def pert():
    # the skew term makes the KPZ coupling non-degenerate
    return perturbed_potential(0.3, 1.0, skew=0.3)


@pytest.fixture(scope="session")
def pert_even():
    return perturbed_potential(0.3, 1.0)


@pytest.fixture(scope="session")
def pert_cache(pert):
    return CoefficientCache(pert, 1.05)


@pytest.fixture(scope="session")
def gauss_cache(gauss):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateKPZWarning)
        return CoefficientCache(gauss, 1.05)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance_log.LINES):
            terminalreporter.write_line(acceptance_log.LINES[n])
