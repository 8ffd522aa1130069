import numpy as np
import pytest

from trapbose.hartree_fock import tabulate_hf
from trapbose.units import TrapGeometry, make_reduced_units

# acceptance outcomes, printed in the terminal summary: {number: (passed, line)}
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def geom():
    return TrapGeometry()


@pytest.fixture(scope="session")
def units(geom):
    return make_reduced_units(geom)


@pytest.fixture(scope="session")
def table_275(geom):
    """Hartree-Fock table at T = 2.75 up to mu = 2.0 (shared by the slow tests)."""
    return tabulate_hf(2.75, 2.0, geom)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number][1])
