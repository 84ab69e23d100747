"""
Shared pytest fixtures for all tests.
"""
import pytest
import sys
from pathlib import Path

import numpy as np

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from services.model import Params


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproduction tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long reproduction of published parameter values")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


class HopfNormalForm:
    """x' = x - y - x r^2, y' = x + y - y r^2, z' = -z: unit limit cycle of period 2 pi."""

    def rhs(self, s):
        x, y, z = s
        r2 = x * x + y * y
        return np.array([x - y - x * r2, x + y - y * r2, -z])

    def jacobian(self, s):
        x, y, _ = s
        return np.array([
            [1.0 - 3.0 * x * x - y * y, -1.0 - 2.0 * x * y, 0.0],
            [1.0 - 2.0 * x * y, 1.0 - x * x - 3.0 * y * y, 0.0],
            [0.0, 0.0, -1.0],
        ])


class LinearField:
    """s' = A s."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def rhs(self, s):
        return self.matrix @ np.asarray(s)

    def jacobian(self, s):
        return self.matrix


@pytest.fixture
def flip_params() -> Params:
    """Inclination-flip configuration on the primary homoclinic locus."""
    return Params(alpha=0.5, mu=0.0)


@pytest.fixture
def hopf() -> HopfNormalForm:
    return HopfNormalForm()


@pytest.fixture
def diagonal_field() -> LinearField:
    """Decoupled decay with rates 1, 2, 3."""
    return LinearField(np.diag([-1.0, -2.0, -3.0]))


@pytest.fixture
def growth_field() -> LinearField:
    """Uniform exponential growth."""
    return LinearField(np.eye(3))
