import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geotrack.config import load_config

settings.register_profile("geotrack", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("geotrack")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    """A short, cheap scenario: 20 s loop, 8 channels, small aerial tile."""
    return load_config(overrides={
        "world.duration": "20",
        "world.channels": "8",
        "registration.aerial_size": "160",
    })


def pytest_terminal_summary(terminalreporter):
    verdicts = getattr(__import__("sys").modules.get("test_acceptance"), "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        terminalreporter.write_line(verdicts[number])
