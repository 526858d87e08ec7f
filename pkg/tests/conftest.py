"""Shared pytest hooks.

The acceptance tests record one verdict line per criterion; echo them in a
dedicated section of the terminal summary so every verdict is visible in the
run log regardless of output capture and of which assertions tripped.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICT_LINES", None) if module else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
