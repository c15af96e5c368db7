import sys
from pathlib import Path

import pytest

# make the oracle module importable from every test file
sys.path.insert(0, str(Path(__file__).parent))


_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_lines(request):
    """One PASS/FAIL/SKIP line per acceptance criterion, printed at the end of the run."""
    return request.config.stash.setdefault(_LINES, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
