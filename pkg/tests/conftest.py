import numpy as np
import pytest

from bmlr.model import ModelParameters

ACCEPTANCE_LINES = []


def random_params(rng, n, m, p, q, sigma_r=1.0, sigma_c=1.0):
    A = rng.random((n, m)) + 0.05
    A /= A.sum(axis=1, keepdims=True)
    return ModelParameters(A, rng.random((q, p)) + 0.1, sigma_r, sigma_c)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
