import numpy as np
import pytest

from fcma.simgen import gen_replication, make_scenario

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def simple_study():
    return gen_replication(make_scenario("simple", n=400, T=50), seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
