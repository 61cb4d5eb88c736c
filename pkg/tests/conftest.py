import os

_ACCEPTANCE_RESULTS = []


def record_criterion(crit_id: str, description: str, passed: bool, detail: str = ""):
    """Collect one acceptance-criterion verdict for the end-of-run table."""
    _ACCEPTANCE_RESULTS.append((crit_id, description, bool(passed), detail))


def workers() -> int:
    return min(2, os.cpu_count() or 1)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, desc, ok, detail in _ACCEPTANCE_RESULTS:
        line = f"[{'PASS' if ok else 'FAIL'}] {cid}: {desc}"
        if detail:
            line += f"  -- {detail}"
        terminalreporter.write_line(line)
