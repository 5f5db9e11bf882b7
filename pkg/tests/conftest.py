"""Shared fixtures and the acceptance-summary hook.

Every test whose node lives in test_acceptance.py gets one PASS/FAIL
line in a dedicated terminal section, so the final gate is readable at
a glance even inside a long pytest run.
"""

from __future__ import annotations

import pytest

_ACCEPTANCE_FILE = "test_acceptance.py"
_acceptance_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if _ACCEPTANCE_FILE not in report.nodeid:
        return
    if report.when == "call":
        _acceptance_outcomes[report.nodeid] = report.outcome
    elif report.when == "setup" and report.outcome != "passed":
        # Fixture errors and skips never reach the call phase.
        _acceptance_outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_acceptance_outcomes):
        outcome = _acceptance_outcomes[nodeid]
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{tag} {nodeid}")
