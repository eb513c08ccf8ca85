import pytest

CRITERIA = {}


@pytest.fixture
def record():
    """Store a one-line verdict for an acceptance criterion."""
    def _record(number, passed, detail):
        CRITERIA[number] = (bool(passed), detail)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        passed, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
