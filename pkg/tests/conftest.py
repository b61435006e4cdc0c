import numpy as np
import pytest

from catabird.model import zoo_preset


@pytest.fixture(scope="session")
def mm1():
    """Constant-rate immigration-emigration process, alpha = beta = xi = 1."""
    return zoo_preset("ie_const", alpha=1.0, beta=1.0, xi=1.0)


@pytest.fixture(scope="session")
def a3_sub():
    """Subcritical constant-rate process (hat twin positive recurrent)."""
    return zoo_preset("ie_const", alpha=1.0, beta=2.0, xi=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run tests marked slow")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
