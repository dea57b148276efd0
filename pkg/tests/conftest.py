"""Shared pytest hooks.

The acceptance suite records one human-readable line per criterion via
``tests.test_acceptance.report``.  The hooks below echo those lines — plus an
explicit FAIL line for any acceptance test that did not pass — in a dedicated
terminal section so a plain ``pytest -v`` run shows a pass/fail verdict for
every criterion.
"""

_acceptance_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    _acceptance_outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import sys

    module = sys.modules.get("tests.test_acceptance") or sys.modules.get(
        "test_acceptance"
    )
    pass_lines = list(getattr(module, "PASS_LINES", [])) if module else []
    if not _acceptance_outcomes and not pass_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in pass_lines:
        terminalreporter.write_line(line)
    for nodeid, outcome in sorted(_acceptance_outcomes.items()):
        if outcome != "passed":
            name = nodeid.split("::")[-1]
            terminalreporter.write_line(f"ACCEPTANCE FAIL {name} ({outcome})")
