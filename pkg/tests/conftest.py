import time

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")

_results: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    info = getattr(report, "acceptance", None)
    if info is None:
        return
    number, title = info
    entry = _results.setdefault(number, {"title": title, "ok": True, "seen": False, "seconds": 0.0})
    if report.when == "call" or report.outcome != "passed":
        entry["seen"] = True
        entry["seconds"] += report.duration
        if report.outcome != "passed":
            entry["ok"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().acceptance = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        if not entry["seen"]:
            continue
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number:2d}: {entry['title']} ({entry['seconds']:.1f} s)")


@pytest.fixture
def stopwatch():
    """Context-free timer: call it to get seconds since the fixture was created."""
    start = time.perf_counter()
    return lambda: time.perf_counter() - start
