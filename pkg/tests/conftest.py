"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

import time

import pytest

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}


class CriterionRecorder:
    def __init__(self, lines: dict, number: int, title: str, budget_s: float) -> None:
        self.lines, self.number, self.title, self.budget_s = lines, number, title, budget_s
        self.t0 = time.perf_counter()

    def finish(self, passed: bool, detail: str) -> None:
        elapsed = time.perf_counter() - self.t0
        in_time = elapsed < self.budget_s
        verdict = "PASS" if passed and in_time else "FAIL"
        line = (f"criterion {self.number:2d} {verdict}  {self.title}: {detail} "
                f"[{elapsed:.1f}s of {self.budget_s:.0f}s]")
        self.lines[self.number] = line
        print(line)
        assert in_time, line
        assert passed, line


@pytest.fixture
def criterion(request):
    lines = request.config.stash[_LINES]

    def start(number: int, title: str, budget_s: float) -> CriterionRecorder:
        lines[number] = f"criterion {number:2d} FAIL  {title}: did not finish"
        return CriterionRecorder(lines, number, title, budget_s)

    return start


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
