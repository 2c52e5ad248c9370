import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blockopt.model import BangBangResource, Domain, Params

# solves take milliseconds to tens of milliseconds; no per-example deadline
settings.register_profile("blockopt", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("blockopt")


@pytest.fixture
def unit():
    return Domain(0.0, 1.0)


@pytest.fixture
def half_left(unit):
    return BangBangResource(unit, ((0.0, 0.5),))


@pytest.fixture
def default_params():
    return Params()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number, title, passed, detail):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        print(line)
        _acceptance_lines.append(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)
