"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""
import pytest

_outcomes: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = tuple(mark.args)


def pytest_runtest_logreport(report):
    marks = getattr(report, "criterion", None)
    if marks is None:
        return
    n, title = marks
    entry = _outcomes.setdefault(n, {"title": title, "ok": True})
    if report.failed or (report.when == "call" and report.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        e = _outcomes[n]
        terminalreporter.write_line(f"{'PASS' if e['ok'] else 'FAIL'} criterion {n}: {e['title']}")
