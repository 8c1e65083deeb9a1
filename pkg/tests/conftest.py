import re

import pytest

CRITERIA = {
    1: "operator consistency",
    2: "MAP/Tikhonov bridge",
    3: "dense-oracle equivalence",
    4: "sampler correctness",
    5: "end-to-end quality",
    6: "UQ ordering under noise",
    7: "stationarity and restarts",
    8: "real-image reconstruction",
    9: "closed forms",
    10: "CLI determinism",
}

_results = {}


@pytest.fixture
def criterion():
    """Record the verdict of one acceptance criterion; returns ``passed``."""
    def record(number, passed, detail=""):
        _results[number] = (bool(passed), detail)
        print(_line(number))
        return passed
    return record


def _line(number):
    passed, detail = _results[number]
    return f"AC{number:<3}{'PASS' if passed else 'FAIL'}  {CRITERIA[number]}: {detail}"


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    m = re.match(r"test_ac(\d+)_", item.name)
    if m and report.failed and int(m.group(1)) not in _results:
        _results[int(m.group(1))] = (False, f"errored in {report.when}: {call.excinfo.typename}")
    return report


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in CRITERIA:
        if number in _results:
            terminalreporter.write_line(_line(number))
        else:
            terminalreporter.write_line(f"AC{number:<3}----  {CRITERIA[number]}: not run")
