"""Collects one pass/fail line per acceptance criterion and prints them at the end."""
import pytest

_LINES = []


@pytest.fixture(scope="session")
def criterion_report():
    def record(number, ok, detail, elapsed):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s) {detail}"
        _LINES.append((number, line))
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
