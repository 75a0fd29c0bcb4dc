import numpy as np
import pytest

from lvhba.bench import build_merely_convex, build_scalar_testbed, build_strongly_convex
from lvhba.core import Gamma


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def unit_gamma():
    return Gamma(1.0, 1.0)


@pytest.fixture
def scalar():
    return build_scalar_testbed()


@pytest.fixture
def scalar_problem(scalar):
    return scalar.problem


@pytest.fixture
def mc_small():
    return build_merely_convex(3)


@pytest.fixture
def sc_small():
    return build_strongly_convex(8, seed=0)
