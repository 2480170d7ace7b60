from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import receipt_dataset, tiny_dataset  # noqa: E402


@pytest.fixture
def tiny():
    return tiny_dataset()


@pytest.fixture(scope="session")
def receipts():
    return receipt_dataset(100)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL/SKIP line per acceptance criterion."""
    rows: dict[str, str] = {}
    for status in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            if status != "skipped" and getattr(rep, "when", "call") != "call":
                continue
            rows[nodeid.split("::")[-1]] = status
    if rows:
        terminalreporter.section("acceptance criteria")
        for name in sorted(rows):
            terminalreporter.write_line(f"{rows[name].upper():7s} {name}")
