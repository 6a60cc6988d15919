"""Shared pytest plumbing: the acceptance gate summary section.

Gate tests register one line each through the `gate` fixture; the terminal
summary prints them in registration order so the final report shows a
single [PASS]/[FAIL] verdict per headline guarantee.
"""

import pytest

GATE_LINES: list[str] = []


@pytest.fixture
def gate():
    def _gate(name: str, passed: bool, detail: str) -> None:
        word = "PASS" if passed else "FAIL"
        GATE_LINES.append(f"[{word}] {name}: {detail}")
        assert passed, f"{name}: {detail}"

    return _gate


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not GATE_LINES:
        return
    terminalreporter.section("acceptance gate")
    for line in GATE_LINES:
        terminalreporter.write_line(line)
