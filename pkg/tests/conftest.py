import pytest

_CRITERIA: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-minute training experiment")


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        _CRITERIA.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
