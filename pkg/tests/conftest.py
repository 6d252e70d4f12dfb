"""Shared pytest wiring.

Acceptance tests carry ``@pytest.mark.criterion(n)`` and may attach a short
``detail`` user property. After the run, one line per criterion is printed
with the combined outcome of every test bearing that number.
"""

from __future__ import annotations

import pytest

_results: dict[int, list[tuple[bool, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    failed_setup = rep.when == "setup" and not rep.passed
    if rep.when == "call" or failed_setup:
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        if not rep.passed and not detail:
            detail = f"{item.name} {rep.outcome}"
        _results.setdefault(mark.args[0], []).append((rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        runs = _results[n]
        ok = all(p for p, _ in runs)
        detail = " | ".join(d for _, d in runs if d)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
