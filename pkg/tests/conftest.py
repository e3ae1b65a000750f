import numpy as np
import pytest
from hypothesis import settings

from mdlab.rng import SeededStream

settings.register_profile("mdlab", deadline=None, max_examples=60)
settings.load_profile("mdlab")


@pytest.fixture
def stream():
    return SeededStream(20240601, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one acceptance verdict; the lines are printed in the terminal summary."""

    def record(name, ok, detail):
        ACCEPTANCE.append(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
        print(ACCEPTANCE[-1])
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
