import pytest

_CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion_log():
    """Callable recording the one-line verdict of an acceptance criterion."""

    def record(number: int, passed: bool, text: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {text}"
        _CRITERIA[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
