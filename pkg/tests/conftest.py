import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """``criterion(n, passed, text)`` prints and stores one PASS/FAIL line; ``passed=None`` is info only."""
    def record(number, passed, text):
        tag = "INFO" if passed is None else ("PASS" if passed else "FAIL")
        line = f"[{tag}] criterion {number}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
