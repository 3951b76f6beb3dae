from __future__ import annotations

import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: str, ok: bool, text: str) -> None:
        line = f"criterion {number:<3} {'PASS' if ok else 'FAIL'}  {text}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: (int(s.split()[1].rstrip("ab")), s.split()[1])):
            terminalreporter.write_line(line)
