import time
from pathlib import Path

import pytest

SUITE_BUDGET_S = 60.0

_results = []
_start = []


def pytest_sessionstart(session):
    _start.append(time.perf_counter())


@pytest.fixture(scope="session")
def acceptance():
    """Collects one ``(criterion, passed, detail)`` line per acceptance check; ``None`` means skipped."""

    def record(criterion, passed, detail):
        _results.append((criterion, None if passed is None else bool(passed), detail))
        return passed

    return record


def _is_full_run(config):
    """True when the whole suite was collected, so the wall time is meaningful."""
    selected = [Path(a).resolve() for a in config.args]
    whole = [(config.rootpath / p).resolve() for p in config.getini("testpaths")] or [config.rootpath.resolve()]
    return not config.option.keyword and not config.option.markexpr and selected in ([], whole)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    elapsed = time.perf_counter() - _start[0]
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion, passed, detail in _results:
        word = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        tr.write_line(f"{word}  criterion {criterion}: {detail}")
    if _is_full_run(config):
        ok = elapsed < SUITE_BUDGET_S
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion 5 (suite time): full suite ran in {elapsed:.1f} s, budget {SUITE_BUDGET_S:.0f} s")


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _start[0]
    if _results and elapsed >= SUITE_BUDGET_S and session.exitstatus == 0 and _is_full_run(session.config):
        session.exitstatus = 1
