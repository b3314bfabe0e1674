"""Collects the acceptance verdict lines and prints them after the run."""
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record ``verdict(n, passed, detail)`` for an acceptance criterion."""
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
