import json
import os
import sys

import pytest

HERE = os.path.dirname(__file__)
sys.path.insert(0, HERE)


@pytest.fixture(scope="session")
def frozen():
    """Oracle results frozen by ``freeze_oracles.py``."""
    with open(os.path.join(HERE, "fixtures", "oracle_values.json")) as fh:
        return json.load(fh)


# -- acceptance summary: one PASS/FAIL line per criterion -----------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _CRITERIA[item.nodeid] = {"number": number, "title": title, "status": "NOT RUN", "detail": ""}


def pytest_runtest_logreport(report):
    entry = _CRITERIA.get(report.nodeid)
    if entry is None:
        return
    if report.failed:
        entry["status"] = "FAIL"
    elif report.when == "call" and entry["status"] != "FAIL":
        entry["status"] = "PASS" if report.passed else "SKIP"
    for key, value in report.user_properties:
        if key == "detail":
            entry["detail"] = value


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for entry in sorted(_CRITERIA.values(), key=lambda e: e["number"]):
        detail = f"  [{entry['detail']}]" if entry["detail"] else ""
        terminalreporter.write_line(f"criterion {entry['number']:>2}: {entry['status']:<4}  {entry['title']}{detail}")
