"""Shared pytest hooks: the acceptance summary table."""

import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    label = getattr(item.function, "_acceptance_label", None)
    if label is None:
        return
    if rep.when == "call":
        _RESULTS[label] = "PASS" if rep.passed else (
            "SKIP" if rep.skipped else "FAIL")
    elif rep.failed:
        _RESULTS[label] = "FAIL"
    elif rep.when == "setup" and rep.skipped:
        _RESULTS.setdefault(label, "SKIP")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance")
    for label, status in _RESULTS.items():
        terminalreporter.write_line(f"[acceptance] {label}: {status}")
