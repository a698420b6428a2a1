import re

import pytest

_RESULTS: dict[int, dict] = {}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


@pytest.fixture
def criterion_log(request):
    """Attach a one-line measurement summary to the current acceptance criterion."""
    m = _PATTERN.search(request.node.nodeid)
    entry = _RESULTS.setdefault(int(m.group(1)), {"name": m.group(2), "outcome": "not run", "detail": ""})

    def log(text: str) -> None:
        entry["detail"] = text

    return log


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    entry = _RESULTS.setdefault(int(m.group(1)), {"name": m.group(2), "outcome": "not run", "detail": ""})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["outcome"] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_RESULTS):
        e = _RESULTS[num]
        tr.write_line(f"criterion {num:2d} {e['outcome']:4s} {e['name']}: {e['detail']}")
