"""Collects outcomes of tests marked ``@pytest.mark.criterion(k, title)`` and
prints one PASS/FAIL line per acceptance criterion at the end of the run."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "notes": []})
    entry["ok"] = entry["ok"] and report.passed
    entry["notes"].extend(v for k, v in item.user_properties if k == "measured")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "PASS" if entry["ok"] else "FAIL"
        line = f"criterion {number:>2} {status}  {entry['title']}"
        if entry["notes"]:
            line += "  [" + "; ".join(entry["notes"]) + "]"
        terminalreporter.write_line(line)
