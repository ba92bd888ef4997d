"""Shared pytest plumbing.

The acceptance module runs last so it can see how the invariant-marked tests
fared in the same session, and every acceptance criterion reports one
PASS/FAIL line in the terminal summary.
"""

import pytest

ACCEPTANCE_MODULE = "test_acceptance.py"

_invariant_ids: set = set()
_invariant_outcomes: dict = {}
_criteria: list = []


def pytest_collection_modifyitems(session, config, items):
    late = [it for it in items if it.fspath.basename == ACCEPTANCE_MODULE]
    early = [it for it in items if it.fspath.basename != ACCEPTANCE_MODULE]
    items[:] = early + late
    _invariant_ids.clear()
    _invariant_ids.update(it.nodeid for it in early if it.get_closest_marker("invariant"))


def pytest_runtest_logreport(report):
    if report.nodeid not in _invariant_ids:
        return
    if report.when == "call" or report.failed or report.skipped:
        prev = _invariant_outcomes.get(report.nodeid)
        if prev in (None, "passed"):
            _invariant_outcomes[report.nodeid] = report.outcome


class InvariantLedger:
    """Outcomes of invariant-marked tests collected in this session."""

    @property
    def collected(self) -> set:
        return set(_invariant_ids)

    @property
    def outcomes(self) -> dict:
        return dict(_invariant_outcomes)

    @property
    def complete(self) -> bool:
        return bool(_invariant_ids) and _invariant_ids <= set(_invariant_outcomes)


@pytest.fixture(scope="session")
def invariant_ledger():
    return InvariantLedger()


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, title, passed, detail)``."""

    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}" + (f" | {detail}" if detail else "")
        _criteria.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_criteria, key=lambda c: c[0]):
        terminalreporter.write_line(line)
