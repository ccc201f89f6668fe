import numpy as np
import pytest
from hypothesis import settings

from holevo.models import make_spin_model

settings.register_profile("repo", max_examples=25, deadline=None, derandomize=True)
settings.load_profile("repo")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def qubit_model():
    return make_spin_model(2, (0.4, 0.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
