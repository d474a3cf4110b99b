from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

import time

import pytest

ACCEPTANCE_LINES = []


class AcceptanceLog:
    def __init__(self, number: int, title: str, limit: float):
        self.number, self.title, self.limit = number, title, limit
        self.start = time.perf_counter()

    def finish(self, passed: bool, detail: str) -> bool:
        elapsed = time.perf_counter() - self.start
        ok = passed and elapsed <= self.limit
        line = (f"criterion {self.number:>2} {'PASS' if ok else 'FAIL'}  {self.title}: {detail} "
                f"[{elapsed:.1f} s of {self.limit:.0f} s]")
        ACCEPTANCE_LINES.append((self.number, line))
        print(line)
        return ok


@pytest.fixture
def acceptance():
    return AcceptanceLog


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
