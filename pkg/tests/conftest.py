import numpy as np
import pytest

from mobilitylab.graph import Graph


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="run desk-scale Monte-Carlo checks"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def path_graph():
    """0 - 1 - 2 - 3 - 4"""
    return Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])


@pytest.fixture
def triangle():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def k4():
    return Graph.from_edges(4, [(u, v) for u in range(4) for v in range(u + 1, 4)])


@pytest.fixture
def star():
    def make(k: int) -> Graph:
        return Graph.from_edges(k + 1, [(0, leaf) for leaf in range(1, k + 1)])

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
