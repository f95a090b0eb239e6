import numpy as np
import pytest

from farmpc.disturbance import WeatherSeries
from farmpc.params import load_params


@pytest.fixture(scope="session")
def params():
    return load_params()


@pytest.fixture(scope="session")
def p(params):
    return params[0]


@pytest.fixture(scope="session")
def pp(params):
    return params[1]


@pytest.fixture
def constant_weather():
    return WeatherSeries(0.0, 3600.0, np.tile([15.0, 1.5e-3, 7e-3], (49, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(pytestconfig):
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return pytestconfig.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
