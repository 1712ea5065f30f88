import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_KEY] = []


@pytest.fixture
def verdict(request):
    """Record ``(criterion, ok, detail)``; the lines are printed in the terminal summary."""
    lines = request.config.stash[_KEY]

    def record(criterion: str, ok: bool, detail: str):
        lines.append(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
