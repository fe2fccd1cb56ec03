"""Shared sink for acceptance PASS/FAIL lines; the conftest terminal
summary replays them so they stay visible under captured runs."""

LINES = []


def record(line: str) -> None:
    LINES.append(line)
