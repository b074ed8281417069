"""Collects acceptance verdicts and prints them once the session ends."""
import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """``verdict(label, ok, detail)`` records one PASS/FAIL line."""

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else "")
        _VERDICTS.append(line)
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
