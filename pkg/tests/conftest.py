import numpy as np
import pytest

from opeval.core.tree_env import TreeEnv


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tree6():
    return TreeEnv.one_success(6)


@pytest.fixture
def tree3():
    return TreeEnv.one_success(3)
