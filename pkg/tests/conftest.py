import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fibersys.scenarios import load_scenario

settings.register_profile("fibersys", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fibersys")

ACCEPTANCE_LINES: dict = {}


@pytest.fixture(scope="session")
def scenarios():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_scenario(name)
        return cache[name]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
