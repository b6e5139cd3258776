import sys

import pytest

_VERDICTS = {}


@pytest.fixture
def criterion():
    """
    Record a pass/fail verdict for a numbered acceptance criterion.

    Call as ``criterion(number, ok, detail)``. The line is echoed right away
    and again in the terminal summary, then the test fails if ``ok`` is false.
    """

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        sys.__stdout__.write("\n" + line + "\n")
        sys.__stdout__.flush()
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
