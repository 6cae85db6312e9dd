import numpy as np
import pytest

from mmbm.model import validate_model

_CRITERIA_LINES = []


def record_criterion(line):
    _CRITERIA_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def common_model():
    return validate_model({"q": [[-1, 1], [1, -1]], "mu": [-0.5, -0.5], "sigma": [1, 1], "a": [0, 0], "b": [1, 2]})


@pytest.fixture
def nodiff1_model():
    return validate_model({"q": [[-1, 1], [1, -1]], "mu": [-1, 0.5], "sigma": [0, 1], "a": [0, 0], "b": [1, 2]})


@pytest.fixture
def nodiff2_model():
    return validate_model({"q": [[-1, 1], [1, -1]], "mu": [-2, 1], "sigma": [1, 0], "a": [0, 0], "b": [1, 2]})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion_log():
    return record_criterion
