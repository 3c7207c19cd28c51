import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record a one-line verdict for the acceptance summary."""
    def _report(criterion, passed, text):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
