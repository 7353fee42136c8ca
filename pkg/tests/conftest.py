import time

import numpy as np
import pytest

from sigmaflow.experiments import cos2_profile
from sigmaflow.flow import FlowConfig, run

# amplitude of u = A cos(2 theta), g = exp(2u) g0, with min sigma_1 > 0 > min sigma_2 (n = 5);
# the bisection oracle puts sigma_2 = 0 at A = 5/16 and sigma_1 = 0 at A = 5/8
CONE_ENTRY_AMP = 0.45

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def reference_config():
    return FlowConfig(n=5, eps=0.1, grid_size=128, quad_order=200)


@pytest.fixture(scope="session")
def reference_u0(reference_config):
    return cos2_profile(reference_config.grid(), 0.2, 5)


@pytest.fixture(scope="session")
def timed_reference_run(reference_config, reference_u0):
    start = time.perf_counter()
    trajectory = run(reference_config, reference_u0)
    return trajectory, time.perf_counter() - start


@pytest.fixture(scope="session")
def reference_trajectory(timed_reference_run):
    return timed_reference_run[0]


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
