from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cbdybw.learning import synth_classification
from cbdybw.topology import make_graph

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# (criterion, passed, detail) collected by acceptance tests for the end-of-run summary
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


@pytest.fixture
def report():
    def _report(name: str, passed: bool, detail: str = "") -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append((name, bool(passed), detail))

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def path3():
    return make_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def edge2():
    return make_graph(2, [(0, 1)])


@pytest.fixture(scope="session")
def small_ds():
    return synth_classification(100, 2, 2, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
