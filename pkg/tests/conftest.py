from __future__ import annotations

import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def central_difference(fn, point, index, h=1e-6):
    """Second-order central difference oracle used against symbolic derivatives."""
    hi = np.array(point, dtype=float)
    lo = np.array(point, dtype=float)
    hi[index] += h
    lo[index] -= h
    return (fn(hi) - fn(lo)) / (2.0 * h)


@pytest.fixture
def fd():
    return central_difference


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, when that module ran."""
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(results):
        passed, line = results[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number}: {line}")
