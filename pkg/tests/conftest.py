import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_criteria: dict = {}
_outcomes: dict = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number, title): an acceptance criterion, summarized at the end"
    )


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            _criteria[item.nodeid] = m.args


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    prev = _outcomes.get(report.nodeid, "PASS")
    if report.failed:
        _outcomes[report.nodeid] = "FAIL"
    elif report.skipped and prev != "FAIL":
        _outcomes[report.nodeid] = "SKIP"
    else:
        _outcomes.setdefault(report.nodeid, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    by_number: dict = {}
    for nodeid, (number, title) in _criteria.items():
        if nodeid not in _outcomes:
            continue
        status = _outcomes[nodeid]
        prev = by_number.get(number, (title, "PASS"))[1]
        worst = max(prev, status, key=["PASS", "SKIP", "FAIL"].index)
        by_number[number] = (title, worst)
    terminalreporter.section("acceptance criteria")
    for number in sorted(by_number):
        title, status = by_number[number]
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}")
