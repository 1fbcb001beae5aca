import numpy as np
import pytest

from bealab import QuadraticSpec, mlp_multitask_loss, quadratic_loss


@pytest.fixture(scope="session")
def mlp():
    return mlp_multitask_loss()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def quad(A, b=None, c=0.0):
    return quadratic_loss(QuadraticSpec(np.asarray(A, dtype=float), b, c))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
