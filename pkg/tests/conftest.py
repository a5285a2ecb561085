import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import cases  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not cases.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(cases.REPORT):
        terminalreporter.write_line(cases.REPORT[number])
