"""Shared pytest plumbing.

The acceptance tests report one verdict line per criterion through the
criterion_report fixture; the lines are echoed immediately and repeated
in a summary section at the end of the run so they survive output
capture.
"""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion_report():
    def _report(tag: str, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] {tag}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line
    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
