import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion; printed at the end of the run."""
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE[number] = (passed, detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
