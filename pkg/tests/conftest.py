import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def criterion(request):
    """report(number, passed, detail): one pass/fail line per acceptance criterion."""
    def report(number, passed, detail=""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        request.config.acceptance_lines.append(line)
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(re.search(r"\d+", s).group())):
        terminalreporter.write_line(line)
