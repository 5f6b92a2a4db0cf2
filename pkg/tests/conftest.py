"""Acceptance reporting: one PASS/FAIL line per criterion after the run."""

import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    status = _RESULTS.get(number, ("PASS", title))[0]
    if report.failed:
        status = "FAIL"
    elif report.skipped and status == "PASS":
        status = "SKIP"
    _RESULTS[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")
