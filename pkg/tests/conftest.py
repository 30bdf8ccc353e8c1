import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ppqtraj.ingest import synth_generate

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion lines recorded by the acceptance suite, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_walk():
    return synth_generate(40, 30, "random_walk", sigma=0.0003, extent=0.02, seed=11)


@pytest.fixture(scope="session")
def small_smooth():
    return synth_generate(40, 30, "constant_velocity", sigma=0.00005, extent=0.02, seed=12,
                          speed=0.0005)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
