import numpy as np
import pytest

from optoent.covariance import TimeGrid, build_covariance
from optoent.model import TWO_PI, free_mass_params
from optoent.spectra import White

OMEGA_F = TWO_PI * 100.0


def white_set(q=1.0, x=1.5, n_bins=6, dt=1e-3, partition="adiabatic"):
    """Cheap free-mass covariance set with white noise."""
    p = free_mass_params(q * OMEGA_F)
    return build_covariance(p, White(OMEGA_F, x * OMEGA_F, 1.0), TimeGrid(n_bins, dt), partition)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""
    def record(name, ok, detail):
        line = f"{name}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
