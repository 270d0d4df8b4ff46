import numpy as np
import pytest

from mobilitylab.errors import ParameterError
from mobilitylab.graph import (
    Graph,
    ball,
    bfs_distances,
    diameter,
    generate,
    giant_component,
    is_tree_ball,
    normalized_degrees,
    read_edge_list,
    sphere,
    write_edge_list,
)


def test_from_edges_dedups_and_sorts():
    g = Graph.from_edges(4, [(2, 0), (0, 2), (3, 1), (0, 1)])
    assert g.edge_count == 3
    assert g.neighbors(0).tolist() == [1, 2]
    assert g.neighbors(1).tolist() == [0, 3]
    assert g.degrees.tolist() == [2, 2, 1, 1]
    assert g.edges().tolist() == [[0, 1], [0, 2], [1, 3]]


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 4)], [(-1, 2)]])
def test_from_edges_rejects_bad_edges(edges):
    with pytest.raises(ParameterError):
        Graph.from_edges(4, edges)


def test_adjacency_is_symmetric(k4):
    a = k4.adjacency.toarray()
    assert np.array_equal(a, a.T)
    assert np.array_equal(a, np.ones((4, 4)) - np.eye(4))


def test_has_edge(path_graph):
    assert path_graph.has_edge(1, 2)
    assert not path_graph.has_edge(0, 2)
    with pytest.raises(ParameterError):
        path_graph.has_edge(7, 0)


def test_generate_is_deterministic():
    first = generate(300, 3.0, seed=11)
    second = generate(300, 3.0, seed=11)
    other = generate(300, 3.0, seed=12)
    assert first == second
    assert first != other
    assert first.meta.seed == 11
    assert first.meta.generator.startswith("numpy.random.Philox")


def test_generate_edge_density():
    n, d = 2000, 4.0
    g = generate(n, d, seed=3)
    expected = d * (n - 1) / 2
    # five standard deviations of Binom(C(n,2), d/n)
    assert abs(g.edge_count - expected) < 5 * np.sqrt(expected)
    assert np.all(np.diff(g.indptr) >= 0)


def test_generate_extremes():
    assert generate(10, 0.0, seed=1).edge_count == 0
    assert generate(6, 6.0, seed=1).edge_count == 15
    assert generate(1, 1.0, seed=1).edge_count == 0


@pytest.mark.parametrize("n, d", [(0, 1.0), (10, -1.0), (10, 11.0)])
def test_generate_rejects_bad_parameters(n, d):
    with pytest.raises(ParameterError):
        generate(n, d, seed=0)


def test_ball_and_sphere(path_graph):
    assert ball(path_graph, 2, 0).tolist() == [2]
    assert ball(path_graph, 2, 1).tolist() == [1, 2, 3]
    assert sphere(path_graph, 0, 3).tolist() == [3]
    assert sphere(path_graph, 0, 9).size == 0
    with pytest.raises(ParameterError):
        ball(path_graph, 0, -1)


def test_bfs_distances_unreachable():
    g = Graph.from_edges(4, [(0, 1)])
    assert bfs_distances(g, 0).tolist() == [0, 1, -1, -1]


def test_normalized_degrees(star):
    g = star(4)
    assert normalized_degrees(g, 2.0).tolist() == [2.0, 0.5, 0.5, 0.5, 0.5]
    with pytest.raises(ParameterError):
        normalized_degrees(g, 0.0)


def test_is_tree_ball(triangle, path_graph):
    assert is_tree_ball(path_graph, 2, 2)
    assert not is_tree_ball(triangle, 0, 1)
    assert is_tree_ball(triangle, 0, 0)


def test_giant_component_and_diameter(path_graph):
    g = Graph.from_edges(7, [(0, 1), (1, 2), (2, 3), (5, 6)])
    assert giant_component(g).tolist() == [0, 1, 2, 3]
    assert diameter(g) == 3
    assert diameter(path_graph) == 4
    assert diameter(path_graph, exact=False) == 4


def test_edge_list_round_trip(tmp_path):
    g = generate(50, 2.5, seed=8)
    target = tmp_path / "graph.txt"
    write_edge_list(g, target)
    assert target.read_text().startswith("# n=50 d=2.5 seed=8")
    back = read_edge_list(target)
    assert back == g
    assert back.meta.n == 50


def test_read_edge_list_rejects_garbage(tmp_path):
    target = tmp_path / "graph.txt"
    target.write_text("0 1\nfoo bar\n")
    with pytest.raises(ParameterError, match="malformed"):
        read_edge_list(target)
