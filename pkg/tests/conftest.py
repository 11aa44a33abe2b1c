import pytest

from qlwave import ModelParams

ACCEPTANCE_LINES = []


@pytest.fixture
def default_params():
    return ModelParams()


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    def report(number, title, ok, detail):
        ACCEPTANCE_LINES.append((number, f"[C{number:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"))
        print(ACCEPTANCE_LINES[-1][1])
        assert ok, detail
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
