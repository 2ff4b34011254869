import time

import pytest

_RESULTS = []


class CriterionTimer:
    """Times one acceptance criterion and records its outcome for the summary."""

    def __init__(self, cid, name, budget):
        self.cid, self.name, self.budget = cid, name, budget
        self.start = time.perf_counter()

    def record(self, passed, value, threshold):
        elapsed = time.perf_counter() - self.start
        in_time = elapsed < self.budget
        _RESULTS.append((self.cid, self.name, bool(passed) and in_time, value, threshold, elapsed, self.budget))
        print(f"criterion {self.cid}: {'PASS' if passed and in_time else 'FAIL'} value={value} "
              f"threshold={threshold} elapsed={elapsed:.1f}s (budget {self.budget:g}s)")
        return bool(passed), in_time


@pytest.fixture
def criterion():
    return CriterionTimer


def _key(cid):
    num = "".join(ch for ch in cid if ch.isdigit())
    return int(num), cid


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, name, ok, value, threshold, elapsed, budget in sorted(_RESULTS, key=lambda r: _key(r[0])):
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'}  {cid:<4} {name:<40} value={value!s:<26} "
            f"threshold={threshold!s:<22} {elapsed:7.1f}s / {budget:g}s")
