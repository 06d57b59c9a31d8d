from __future__ import annotations

import sys


def pytest_terminal_summary(terminalreporter):
    lines = [
        line
        for name, mod in list(sys.modules.items())
        if name.endswith("test_acceptance")
        for line in getattr(mod, "RESULTS", [])
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
