import numpy as np
import pytest

from girsanov_diffusion import GaussianSpec, TimeGrid

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def q0():
    return GaussianSpec([2.0], [4.0])


@pytest.fixture
def grid():
    return TimeGrid(1.0, 100)
