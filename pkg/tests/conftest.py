import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def gate(request):
    """Record one pass/fail line per acceptance criterion and print it."""
    lines = request.config.stash.setdefault(_LINES_KEY, [])

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        capman = request.config.pluginmanager.getplugin("capturemanager")
        with capman.global_and_fixture_disabled():
            print("\n" + line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
