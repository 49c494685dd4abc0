import pytest

_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line, then assert the outcome."""

    def check(name: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        _LINES.append(line)
        print(line, flush=True)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
