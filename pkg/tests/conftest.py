import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from velint import TangentVector, curved_oscillator, harmonic, pendulum

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def osc():
    return harmonic()


@pytest.fixture(scope="session")
def curved():
    return curved_oscillator()


@pytest.fixture(scope="session")
def pend():
    return pendulum()


def tv(q, v):
    return TangentVector(np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(v, float)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
