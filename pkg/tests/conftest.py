import numpy as np
import pytest

from qrobot.distance_task import build_distance_task, inject_search_error, transition_labels
from qrobot.hilbert import ModelConfig
from qrobot.taskmodel import build_step_operator


@pytest.fixture(scope="session")
def cfg8():
    return ModelConfig(8, 2)


@pytest.fixture(scope="session")
def task8(cfg8):
    return build_distance_task(cfg8)


@pytest.fixture(scope="session")
def T8(task8):
    return build_step_operator(task8)


@pytest.fixture(scope="session")
def T8_err(task8):
    return inject_search_error(task8, 0.2)


@pytest.fixture(scope="session")
def labels8(task8):
    return transition_labels(task8)


@pytest.fixture(scope="session")
def cfg3():
    return ModelConfig(3, 1)


@pytest.fixture(scope="session")
def T3(cfg3):
    return build_step_operator(build_distance_task(cfg3))


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)
