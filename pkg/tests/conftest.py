"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end."""
import pytest

_LINES = {}


@pytest.fixture
def criterion(request):
    """``criterion(k, label, ok, detail)`` records and prints the verdict for criterion ``k``."""

    def record(k, label, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {k:>2}: {label}  {detail}".rstrip()
        _LINES[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_LINES):
        terminalreporter.write_line(_LINES[k])
