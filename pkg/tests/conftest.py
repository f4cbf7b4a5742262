import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion."""

    def log(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)

    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
