import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_report(request):
    """Records one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def report(number: int, name: str, ok: bool, detail: str) -> bool:
        line = f'{"PASS" if ok else "FAIL"} [{number:2d}] {name}: {detail}'
        lines[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section('acceptance criteria')
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
