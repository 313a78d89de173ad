import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    _, ok, notes = _CRITERIA.get(number, (title, True, []))
    notes = notes + [f"{k}={v}" for k, v in rep.user_properties]
    _CRITERIA[number] = (title, ok and rep.passed, notes)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, notes = _CRITERIA[number]
        detail = f"  [{'; '.join(notes)}]" if notes else ""
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}{detail}")
