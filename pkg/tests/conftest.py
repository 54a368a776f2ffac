import numpy as np
import pytest
from hypothesis import settings

from rspg.game import make_bradley_terry
from rspg.risk import RiskMeasure

settings.register_profile("rspg", max_examples=60, deadline=None)
settings.load_profile("rspg")


@pytest.fixture(scope="session")
def h5_game():
    """Default experiment instance: Bradley-Terry, n = 20, seed 0."""
    return make_bradley_terry(20, seed=0)


@pytest.fixture(scope="session")
def small_game():
    return make_bradley_terry(6, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ALL_RISKS = [
    RiskMeasure.expectation(),
    RiskMeasure.entropic(0.5),
    RiskMeasure.entropic(2.0),
    RiskMeasure.entropic(6.0),
    RiskMeasure.cvar(0.1),
    RiskMeasure.cvar(0.25),
    RiskMeasure.cvar(0.5),
]


ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def report(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
