import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; printed in the summary."""

    def emit(number: int, title: str, passed: bool, detail: str):
        _LINES.append(f"[{number}] {'PASS' if passed else 'FAIL'} {title}: {detail}")
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s[1:s.index("]")])):
            terminalreporter.write_line(line)
