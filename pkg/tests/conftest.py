import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, ok, detail)``."""
    lines = request.config.stash[_KEY]

    def record(number, ok, detail):
        lines.append((number, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_KEY]
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
