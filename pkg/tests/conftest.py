import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "fiberk",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
    derandomize=True,
)
settings.load_profile("fiberk")

_REPORT = []


@pytest.fixture
def report():
    """Record ``(criterion, passed, detail)`` for the acceptance summary."""

    def add(name, passed, detail):
        _REPORT.append((name, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _REPORT:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
