"""Collects acceptance verdicts and prints one line per criterion at the end of the run."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

VERDICTS = {}


def record(criterion, ok, detail):
    VERDICTS.setdefault(criterion, []).append((bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS):
        parts = VERDICTS[key]
        ok = all(p[0] for p in parts)
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}: " + "; ".join(p[1] for p in parts))
