import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria = {}  # id -> [title, passed?]


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(id, title): acceptance criterion this test decides")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            cid, title = m.args
            _criteria.setdefault(cid, [title, None])
            item.user_properties.append(("criterion", cid))


def pytest_runtest_logreport(report):
    cid = dict(report.user_properties).get("criterion")
    if cid is None:
        return
    entry = _criteria[cid]
    if report.failed:
        entry[1] = False
    elif report.when == "call" and report.passed and entry[1] is None:
        entry[1] = True
    elif report.skipped and entry[1] is None:
        entry[1] = "skip"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_criteria, key=lambda c: int(c[2:])):
        title, ok = _criteria[cid]
        status = {True: "PASS", False: "FAIL", "skip": "SKIP", None: "NOT RUN"}[ok]
        tr.write_line(f"{cid} {status:<7} {title}")


@pytest.fixture
def criterion_timer():
    """Returns a stopwatch used to enforce per-criterion runtime budgets."""
    import time

    start = time.perf_counter()
    return lambda: time.perf_counter() - start
