import pytest

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record a named acceptance criterion; pass/fail comes from the test outcome."""
    def record(name, detail=""):
        _RESULTS[request.node.nodeid] = [name, detail, None]
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.nodeid in _RESULTS and (rep.when == "call" or rep.failed):
        entry = _RESULTS[item.nodeid]
        if entry[2] is not False:
            entry[2] = rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, detail, ok in sorted(_RESULTS.values()):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({detail})" if detail else ""))
