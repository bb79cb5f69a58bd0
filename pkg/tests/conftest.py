import numpy as np
import pytest

from src.models.configs import SolverConfig
from src.services.tree_topology import build_complete_tree


@pytest.fixture
def depth1():
    return build_complete_tree(1)


@pytest.fixture
def depth2():
    return build_complete_tree(2)


@pytest.fixture
def rng():
    """Seeded generator, fresh for each test"""
    return np.random.default_rng(1234)


@pytest.fixture
def unit_lambda():
    return SolverConfig(lam=1.0)


@pytest.fixture
def solve_example_q():
    """One point, depth 1: root, left, right"""
    return np.array([[-0.5, 0.5, -10.0]])
