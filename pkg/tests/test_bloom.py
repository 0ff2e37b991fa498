import math
import time
from collections import deque

import numpy as np
import pytest

from corank.bloom import (BloomFilter, augment_graph, bipartite_view,
                          bloom_params, dna_encode, hash_seeds_from,
                          load_encoding, save_encoding)
from corank.errors import ConfigError
from corank.graphs import Graph, erdos_renyi


def bfs_ball(graph, src, depth):
    dist = {src: 0}
    queue = deque([src])
    while queue:
        x = queue.popleft()
        if dist[x] == depth:
            continue
        for y in graph.neighbors(x):
            y = int(y)
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    return set(dist)


def row_contains(encoding, row_bits, node):
    probe = BloomFilter(encoding.c, encoding.k, encoding.seeds)
    return all(row_bits[p] for p in probe.positions(node))


def test_bloom_params_examples():
    assert bloom_params(10, 0.1) == (48, 3)
    assert bloom_params(1, 0.5) == (2, 1)
    # c nondecreasing as the target rate shrinks
    cs = [bloom_params(10, eps)[0] for eps in (0.5, 0.2, 0.1, 0.01, 0.001)]
    assert cs == sorted(cs)
    with pytest.raises(ConfigError):
        bloom_params(10, 1.5)
    with pytest.raises(ConfigError):
        bloom_params(0, 0.1)


def test_no_false_negatives_and_counts(rng):
    f = BloomFilter(128, 4, hash_seeds_from(7))
    keys = rng.integers(0, 10 ** 9, 50)
    for x in keys:
        f.add(int(x))
    assert all(f.contains(int(x)) for x in keys)
    assert f.insert_count == 50


def test_union_properties():
    seeds = hash_seeds_from(3)
    def make(keys):
        f = BloomFilter(64, 3, seeds)
        for x in keys:
            f.add(x)
        return f
    a, b, c = make([1, 2]), make([3]), make([4, 5])
    ab = make([1, 2]); ab.union(b)
    ba = make([3]); ba.union(a)
    assert np.array_equal(ab.bits, ba.bits)  # commutative
    abc1 = make([1, 2]); abc1.union(b); abc1.union(c)
    bc = make([3]); bc.union(c)
    abc2 = make([1, 2]); abc2.union(bc)
    assert np.array_equal(abc1.bits, abc2.bits)  # associative
    aa = make([1, 2]); aa.union(make([1, 2]))
    assert np.array_equal(aa.bits, a.bits)  # idempotent
    assert np.array_equal(ab.bits, np.logical_or(a.bits, b.bits))
    other = BloomFilter(64, 3, hash_seeds_from(99))
    with pytest.raises(ConfigError):
        a.union(other)


def test_size_estimate():
    f = BloomFilter(48, 3, hash_seeds_from(0))
    assert f.size_estimate() == 0.0
    f.add(42)
    if f.nnz == f.k:  # no self-collision among the k positions
        expect = -(48 / 3) * math.log(1 - 3 / 48)
        assert f.size_estimate() == pytest.approx(expect)
    f.bits[:] = True
    assert f.size_estimate() == math.inf


def test_size_estimate_monte_carlo():
    # half-capacity fills estimated within 20%
    c, k = bloom_params(40, 0.1)
    errs = []
    for trial in range(1000):
        f = BloomFilter(c, k, hash_seeds_from(trial))
        for x in range(20):
            f.add(x + trial * 10 ** 6)
        errs.append(abs(f.size_estimate() - 20) / 20)
    assert np.quantile(errs, 0.95) <= 0.2


def test_filter_too_small():
    with pytest.raises(ConfigError):
        BloomFilter(2, 3, hash_seeds_from(0))
    g = Graph.from_edges(3, [0], [1])
    with pytest.raises(ConfigError):
        dna_encode(g, 2, 3, 1)


def test_encode_depth_zero_self_only():
    g = erdos_renyi(30, 0.2, np.random.default_rng(0))
    enc = dna_encode(g, 256, 3, 0, seed=1)
    probe = BloomFilter(256, 3, enc.seeds)
    dense = enc.matrix.toarray().astype(bool)
    for i in range(30):
        expect = np.zeros(256, dtype=bool)
        expect[probe.positions(i)] = True
        assert np.array_equal(dense[i], expect)


def test_encode_path_graph():
    g = Graph.from_edges(3, [0, 1], [1, 2])
    enc = dna_encode(g, 64, 3, 1, seed=0)
    dense = enc.matrix.toarray().astype(bool)
    assert row_contains(enc, dense[1], 0)
    assert row_contains(enc, dense[1], 1)
    assert row_contains(enc, dense[1], 2)
    assert row_contains(enc, dense[0], 0)
    assert row_contains(enc, dense[0], 1)
    assert not row_contains(enc, dense[0], 2)


def test_encode_matches_bfs_oracle(rng):
    for trial in range(15):
        n = int(rng.integers(8, 80))
        g = erdos_renyi(n, float(rng.uniform(0.02, 0.15)), rng)
        for depth in (1, 2, 3):
            enc = dna_encode(g, 512, 3, depth, seed=trial)
            dense = enc.matrix.toarray().astype(bool)
            for i in range(n):
                for j in bfs_ball(g, i, depth):
                    assert row_contains(enc, dense[i], j)


def test_encode_diameter_covers_all():
    g = Graph.from_edges(5, [0, 1, 2, 3], [1, 2, 3, 4])  # path, diameter 4
    enc = dna_encode(g, 512, 3, 4, seed=2)
    dense = enc.matrix.toarray().astype(bool)
    for i in range(5):
        for j in range(5):
            assert row_contains(enc, dense[i], j)


def test_theta_caps_growth():
    # star graph: the hub saturates quickly once theta is small
    n = 40
    g = Graph.from_edges(n, np.zeros(n - 1, dtype=int), np.arange(1, n))
    open_enc = dna_encode(g, 512, 3, 1, seed=0)
    capped = dna_encode(g, 512, 3, 1, theta=3.0, seed=0)
    assert capped.matrix[0].nnz < open_enc.matrix[0].nnz
    with pytest.raises(ConfigError):
        dna_encode(g, 512, 3, 1, theta=0.0)
    with pytest.raises(ConfigError):
        dna_encode(g, 512, 3, -1)


def test_encode_order_independence_jacobi():
    # relabeling nodes must not change what a row encodes (previous-round reads)
    g = Graph.from_edges(4, [0, 1, 2], [1, 2, 3])
    enc = dna_encode(g, 256, 3, 2, seed=5)
    dense = enc.matrix.toarray().astype(bool)
    # node 0 reaches {0,1,2} in two hops but not 3
    assert row_contains(enc, dense[0], 2)
    assert not row_contains(enc, dense[0], 3)


def test_augment_graph_counts(rng):
    g = erdos_renyi(25, 0.15, rng)
    enc = dna_encode(g, 128, 3, 2, seed=0)
    aug = augment_graph(g, enc)
    assert aug.n == g.n + enc.c
    assert aug.edge_count == g.edge_count + enc.nnz

    empty = dna_encode(Graph.from_edges(4, [], []), 32, 2, 0, seed=0)
    empty.matrix.data[:] = 0
    empty.matrix.eliminate_zeros()
    aug0 = augment_graph(Graph.from_edges(4, [0], [1]), empty)
    assert aug0.n == 36 and aug0.edge_count == 1


def test_bipartite_view(rng):
    g = erdos_renyi(15, 0.2, rng)
    enc = dna_encode(g, 64, 3, 1, seed=4)
    view = bipartite_view(enc)
    assert (view.n_users, view.n_items) == (15, 64)
    assert view.nnz == enc.nnz
    assert np.all(view.user_ratings == 1.0)
    for i in range(15):
        assert view.user_row(i)[0].tolist() == enc.row_bits(i).tolist()


def test_encoding_file_round_trip(tmp_path, rng):
    g = erdos_renyi(20, 0.2, rng)
    enc = dna_encode(g, 96, 3, 2, theta=25.0, seed=9)
    path = tmp_path / "enc.txt"
    save_encoding(enc, path)
    back = load_encoding(str(path))
    assert back.c == enc.c and back.k == enc.k and back.depth == enc.depth
    assert back.theta == enc.theta and back.seeds == enc.seeds
    assert np.array_equal(back.matrix.toarray(), enc.matrix.toarray())

    unl = dna_encode(g, 96, 3, 1, seed=9)  # theta=inf round-trips too
    save_encoding(unl, tmp_path / "u.txt")
    assert load_encoding(str(tmp_path / "u.txt")).theta == math.inf


def test_encode_cost_linear_in_depth():
    g = erdos_renyi(400, 0.01, np.random.default_rng(1))
    def cost(depth):
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            dna_encode(g, 128, 3, depth, seed=0)
            best = min(best, time.perf_counter() - t0)
        return best
    c1, c4 = cost(1), cost(4)
    # four rounds should cost roughly 4x one round, far from exponential growth
    assert c4 <= 8.0 * max(c1, 1e-4)
