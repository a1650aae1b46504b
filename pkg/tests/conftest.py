import time

import pytest

from cocapture.io import bundled_fixture, load_config, load_scene
from cocapture.pipeline import op_baseline, plan

PLAN_FIXTURES = ("single", "two", "three", "four", "polytech5", "empty")
BUILDING_FIXTURES = PLAN_FIXTURES[:-1]

_criteria: list[str] = []


class PlanCache:
    """Plans each bundled fixture once per session."""

    def __init__(self):
        self.config = load_config(bundled_fixture("config"))
        self._scenes = {}
        self._plans = {}
        self._baselines = {}
        self.seconds = {}

    def scene(self, name):
        if name not in self._scenes:
            self._scenes[name] = load_scene(bundled_fixture(name), self.config.d_min)
        return self._scenes[name]

    def plan(self, name):
        if name not in self._plans:
            t = time.perf_counter()
            self._plans[name] = plan(self.scene(name), self.config)
            self.seconds[name] = time.perf_counter() - t
        return self._plans[name]

    def baseline(self, name):
        if name not in self._baselines:
            self._baselines[name] = op_baseline(self.scene(name), self.config)
        return self._baselines[name]


@pytest.fixture(scope="session")
def plans():
    return PlanCache()


@pytest.fixture(scope="session")
def criterion_log():
    return _criteria


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in _criteria:
            terminalreporter.write_line(line)
