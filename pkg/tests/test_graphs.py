import io

import numpy as np
import pytest

from corank.errors import ConfigError
from corank.graphs import Graph, erdos_renyi, load_graph, save_graph


def test_from_edges_symmetrize_dedup_selfloops():
    g = Graph.from_edges(4, [0, 1, 0, 2, 2], [1, 0, 0, 3, 3], [1.0, 1.0, 9.0, 2.0, 2.0])
    assert g.edge_count == 2
    assert g.neighbors(0).tolist() == [1]
    assert g.neighbors(1).tolist() == [0]
    assert g.neighbors(3).tolist() == [2]
    assert g.weights(3).tolist() == [2.0]
    with pytest.raises(ConfigError):
        Graph.from_edges(2, [0], [5])


def test_laplacian_matches_edge_sum(rng):
    g = erdos_renyi(25, 0.2, rng)
    table = rng.standard_normal((25, 3))
    lap = g.laplacian()
    quad = float(np.sum(table * (lap @ table)))
    direct = sum(w * np.sum((table[a] - table[b]) ** 2) for a, b, w in g.edges())
    assert quad == pytest.approx(direct, rel=1e-12)
    assert quad >= 0


def test_laplacian_zero_iff_constant_on_components():
    g = Graph.from_edges(4, [0, 2], [1, 3])
    table = np.array([[1.0], [1.0], [5.0], [5.0]])
    assert float(np.sum(table * (g.laplacian() @ table))) == 0.0


def test_erdos_renyi_determinism_and_extremes():
    a = erdos_renyi(30, 0.15, np.random.default_rng(3))
    b = erdos_renyi(30, 0.15, np.random.default_rng(3))
    assert a == b
    assert erdos_renyi(10, 0.0, np.random.default_rng(0)).edge_count == 0
    assert erdos_renyi(10, 1.0, np.random.default_rng(0)).edge_count == 45


def test_graph_file_round_trip(tmp_path, rng):
    g = erdos_renyi(20, 0.2, rng)
    path = tmp_path / "g.txt"
    save_graph(g, path)
    assert load_graph(str(path)) == g

    # isolated trailing node survives via the header
    iso = Graph.from_edges(5, [0], [1])
    save_graph(iso, tmp_path / "iso.txt")
    assert load_graph(str(tmp_path / "iso.txt")).n == 5

    weighted = Graph.from_edges(3, [0, 1], [1, 2], [0.25, 3.5])
    save_graph(weighted, tmp_path / "w.txt")
    assert load_graph(str(tmp_path / "w.txt")) == weighted


def test_load_graph_from_stream():
    g = load_graph(io.StringIO("# c\n0 1\n1 2 0.5\n"))
    assert g.n == 3 and g.edge_count == 2
    assert g.weights(2).tolist() == [0.5]


def test_power_union_two_hops():
    # path 0-1-2-3: 2-hop adds (0,2) and (1,3)
    g = Graph.from_edges(4, [0, 1, 2], [1, 2, 3])
    g2 = g.power_union([1.0, 0.5])
    pairs = {(a, b): w for a, b, w in g2.edges()}
    assert pairs[(0, 1)] == 1.0 and pairs[(1, 2)] == 1.0
    assert pairs[(0, 2)] == 0.5 and pairs[(1, 3)] == 0.5
    assert (0, 3) not in pairs
