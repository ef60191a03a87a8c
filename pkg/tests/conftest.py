import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mixdom.core import MixedDomainGrid, ScenarioSpec, ThetaParams, TrendKind

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def unit_theta():
    return ThetaParams(1.0, 1.0, 1.0)


@pytest.fixture
def correct_p1():
    return ScenarioSpec(TrendKind.CORRECT, (1.0, 1.0), None, 1)


@pytest.fixture
def linear_scenario():
    return ScenarioSpec(TrendKind.SCALED_LINEAR, (0.0, 1.0))


@pytest.fixture
def gp_scenario():
    return ScenarioSpec(TrendKind.GP, (0.0, 1.0), (1.0, 1.0))


def log_uniform_theta(rng, lo=0.1, hi=10.0):
    return ThetaParams.from_array(np.exp(rng.uniform(np.log(lo), np.log(hi), 3)))


def grid(n, delta):
    return MixedDomainGrid(n, delta)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = {}


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
