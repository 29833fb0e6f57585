"""Prints one PASS/FAIL line per acceptance test after the run.

The lines go through the terminal reporter so they survive output capture;
each acceptance test's first docstring line is the printed label.
"""

import pytest

_acceptance: dict[str, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if "test_acceptance.py" not in report.nodeid:
        return
    doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
    if report.when == "call" or (report.when == "setup" and report.failed):
        _acceptance[report.nodeid] = (doc, report.passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.section("acceptance checks")
    for doc, ok in _acceptance.values():
        terminalreporter.write_line(("PASS  " if ok else "FAIL  ") + doc)
