from __future__ import annotations

import numpy as np
import pytest

from tumorflow.core import GridSpec
from tumorflow.kinetics import Params


@pytest.fixture
def unit32() -> GridSpec:
    return GridSpec(32, 32)


@pytest.fixture
def default_params() -> Params:
    return Params()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260114)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_lines() -> list[str]:
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
