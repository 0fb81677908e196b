"""Shared fixtures for the bricklayers test suite."""

from __future__ import annotations

import numpy as np
import pytest

from bricklayers import rates


@pytest.fixture(scope="session")
def ebl1():
    """Exponential bricklayers' rates at beta = 1."""
    return rates.make_ebl(1.0)


@pytest.fixture(scope="session")
def ebl2():
    return rates.make_ebl(2.0)


@pytest.fixture(scope="session")
def perturbed():
    """EBL beta = 1 table with a_2 inflated by 10%: valid, but not EBL."""
    return rates.perturbed_ebl(1.0, n=2, factor=1.1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines collected by tests/test_acceptance.py."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
