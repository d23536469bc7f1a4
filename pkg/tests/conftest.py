import numpy as np
import pytest

from deephedge.market import MarketParams
from deephedge.payoff import CallClaim

ACCEPTANCE_LINES = []


@pytest.fixture
def market():
    return MarketParams()


@pytest.fixture
def claim():
    return CallClaim(110.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
