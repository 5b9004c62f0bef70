"""Shared test plumbing.

test_acceptance.py records one line per acceptance criterion.  The lines
are printed as they happen (visible under ``pytest -s`` or on failure) and
replayed in a dedicated terminal section at the end of the run, so the
per-criterion verdicts are readable in one block regardless of capture
settings.
"""

ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    """Store one criterion verdict line and echo it immediately."""
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
