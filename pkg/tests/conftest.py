import pytest

from rabictl.integrate import TimeGrid
from rabictl.optctl import default_initial_state
from rabictl.params import TABLE2_BASELINE, TABLE2_ESTIMATED


@pytest.fixture(scope="session")
def p_est():
    return TABLE2_ESTIMATED


@pytest.fixture(scope="session")
def p_base():
    return TABLE2_BASELINE


@pytest.fixture(scope="session")
def default_state(p_est):
    return default_initial_state(p_est)


@pytest.fixture(scope="session")
def grid_20y():
    return TimeGrid(0.0, 20.0, 2000)
