import functools

import numpy as np
import pytest

from koopman_uq import pipeline
from koopman_uq.config import load_config


@functools.lru_cache(maxsize=None)
def fitted(preset: str):
    """Operator fitted with a preset's protocol (cached across the session)."""
    cfg = load_config(preset)
    model, pairs = pipeline.fit_operator(cfg)
    return cfg, model, pairs


@pytest.fixture(scope="session")
def ex1():
    return fitted("example1")


@pytest.fixture(scope="session")
def ex2():
    return fitted("example2a")


@pytest.fixture(scope="session")
def ex3():
    return fitted("example3")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
