"""Shared fixtures and the acceptance-criteria summary printed after the run."""

from __future__ import annotations

import numpy as np
import pytest

# criterion number -> (title, passed)
ACCEPTANCE: dict[int, tuple[str, bool]] = {}


def record(number: int, title: str, passed: bool) -> None:
    ACCEPTANCE[number] = (title, passed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed = ACCEPTANCE[number]
        terminalreporter.write_line(f"AC{number:<3d} {'PASS' if passed else 'FAIL'}  {title}")
