import pytest

_results: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by a test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or (call.when != "call" and call.excinfo is None):
        return
    number, title = marker.args
    if call.excinfo is None:
        outcome = "PASS"
    elif call.excinfo.errisinstance(pytest.skip.Exception):
        outcome = "SKIP"
    else:
        outcome = "FAIL"
    # a criterion checked by several tests fails if any of them fails
    if _results.get(number, ("PASS",))[0] == "PASS":
        _results[number] = (outcome, title)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        outcome, title = _results[number]
        terminalreporter.write_line(f"{outcome:<4}  {number:>2}. {title}")
