import io

import numpy as np
import pytest

from corank.data import (CONTINUOUS, IMPLICIT, RatingsMatrix, SyntheticSpec,
                         binarize, enumerate_comparisons, generate_synthetic,
                         load_ratings, save_ratings, split_fixed_count)
from corank.errors import ConfigError, DataError, ParseError

from conftest import random_level_matrix


def test_load_ratings_tab_comma_space():
    for sep in ("\t", ",", " "):
        text = f"# comment\n3{sep}7{sep}5\n3{sep}9{sep}1\n8{sep}7{sep}4\n"
        m = load_ratings(io.StringIO(text))
        assert (m.n_users, m.n_items, m.nnz) == (2, 2, 3)
        assert m.user_ids.tolist() == [3, 8]
        assert m.item_ids.tolist() == [7, 9]
        items, ratings = m.user_row(0)
        assert ratings[items.tolist().index(0)] == 5.0


def test_load_ratings_empty_stream():
    m = load_ratings(io.StringIO("# nothing\n"))
    assert m.n_users == 0 and m.n_items == 0 and m.nnz == 0


def test_load_ratings_duplicate_pair_names_ids():
    text = "1 5 3\n2 5 4\n1 5 2\n"
    with pytest.raises(DataError) as err:
        load_ratings(io.StringIO(text))
    assert "user 1" in str(err.value) and "item 5" in str(err.value)


def test_load_ratings_malformed_line_number():
    with pytest.raises(ParseError) as err:
        load_ratings(io.StringIO("1 2 3\n1 2\n"))
    assert "line 2" in str(err.value)
    with pytest.raises(ParseError):
        load_ratings(io.StringIO("1 2 x\n"))


def test_load_ratings_implicit_splits_zeros():
    m = load_ratings(io.StringIO("0 0 1\n0 1 0\n1 0 1\n"), mode=IMPLICIT)
    assert m.nnz == 2
    assert m.user_zero_row(0).tolist() == [1]
    with pytest.raises(DataError):
        load_ratings(io.StringIO("0 0 3\n"), mode=IMPLICIT)


def test_explicit_mode_rejects_nonlevels():
    with pytest.raises(DataError):
        RatingsMatrix(1, 1, [0], [0], [0.5])
    with pytest.raises(DataError):
        RatingsMatrix(1, 1, [0], [0], [0.0])


def test_round_trip_levels_and_continuous(tmp_path, rng):
    m = random_level_matrix(rng, 12, 20, 6)
    path = tmp_path / "r.tsv"
    save_ratings(m, path)
    again = load_ratings(str(path))
    assert again == m

    cont = RatingsMatrix(3, 4, [0, 1, 2], [1, 2, 3],
                         [0.12345678901234567, -3.5, 2e-7], mode=CONTINUOUS)
    save_ratings(cont, tmp_path / "c.tsv")
    back = load_ratings(str(tmp_path / "c.tsv"), mode=CONTINUOUS)
    assert back == cont


def test_by_user_by_item_crosswalk(rng):
    m = random_level_matrix(rng, 40, 60, 15)
    seen = set()
    for j in range(m.n_items):
        users, ratings = m.item_col(j)
        assert np.all(np.diff(users) > 0)
        for u, x in zip(users, ratings):
            seen.add((int(u), j, float(x)))
    expect = set()
    for i in range(m.n_users):
        items, ratings = m.user_row(i)
        assert np.all(np.diff(items) > 0)
        for j, x in zip(items, ratings):
            expect.add((i, int(j), float(x)))
    assert seen == expect


def test_split_counts_and_drop(rng):
    # one user with 25 ratings, one with 15: n_train=10, min_test=10
    users = np.concatenate([np.zeros(25, dtype=int), np.ones(15, dtype=int)])
    items = np.concatenate([np.arange(25), np.arange(15)])
    ratings = np.ones(40)
    m = RatingsMatrix(2, 30, users, items, ratings)
    sp = split_fixed_count(m, 10, 10, seed=1)
    assert sp.train.user_row(0)[0].size == 10
    assert sp.test.user_row(0)[0].size == 15
    assert sp.train.user_row(1)[0].size == 0  # dropped entirely
    assert sp.test.user_row(1)[0].size == 0


def test_split_determinism_and_disjoint(rng):
    m = random_level_matrix(rng, 30, 50, 25)
    a = split_fixed_count(m, 10, 10, seed=7)
    b = split_fixed_count(m, 10, 10, seed=7)
    assert a.train == b.train and a.test == b.test
    for i in range(m.n_users):
        tr = set(a.train.user_row(i)[0].tolist())
        te = set(a.test.user_row(i)[0].tolist())
        assert not tr & te
        assert tr | te == set(m.user_row(i)[0].tolist())


def test_split_empty_error():
    m = RatingsMatrix(2, 5, [0, 1], [0, 1], [1.0, 2.0])
    with pytest.raises(DataError):
        split_fixed_count(m, 10, 10, seed=0)


def test_binarize_examples():
    m = RatingsMatrix(1, 4, [0, 0, 0, 0], [0, 1, 2, 3], [1, 3, 4, 5])
    b = binarize(m, 4)
    items, vals = b.user_row(0)
    assert items.tolist() == [2, 3] and vals.tolist() == [1.0, 1.0]
    assert b.user_zero_row(0).tolist() == [0, 1]
    assert b.n_levels == 2 and b.mode == IMPLICIT

    all_ones = binarize(m, 1)
    assert all_ones.user_row(0)[0].size == 4
    assert all_ones.user_zero_row(0).size == 0

    with pytest.raises(ConfigError):
        binarize(m, 6)
    with pytest.raises(ConfigError):
        binarize(m, 0)


def test_enumerate_comparisons_examples():
    # ratings {A:5, B:3, C:3} -> (A,B), (A,C) only
    m = RatingsMatrix(1, 3, [0, 0, 0], [0, 1, 2], [5, 3, 3])
    pairs = list(enumerate_comparisons(m, 0))
    assert sorted(pairs) == [(0, 1, 1), (0, 2, 1)]

    same = RatingsMatrix(1, 3, [0, 0, 0], [0, 1, 2], [2, 2, 2])
    assert list(enumerate_comparisons(same, 0)) == []

    with pytest.raises(ConfigError):
        list(enumerate_comparisons(m, 5))


def test_enumerate_comparisons_counts(rng):
    # all-distinct ratings: d*(d-1)/2 pairs; general case matches brute force
    for _ in range(10):
        d = int(rng.integers(2, 30))
        m = RatingsMatrix(1, 50, np.zeros(d, dtype=int),
                          rng.choice(50, d, replace=False),
                          rng.integers(1, 6, d).astype(float))
        got = list(enumerate_comparisons(m, 0))
        items, ratings = m.user_row(0)
        brute = sum(1 for a in range(d) for b in range(a + 1, d)
                    if ratings[a] != ratings[b])
        assert len(got) == brute
        for j, k, y in got:
            rj = ratings[items.tolist().index(j)]
            rk = ratings[items.tolist().index(k)]
            assert y == 1 and rj > rk

    distinct = RatingsMatrix(1, 30, np.zeros(8, dtype=int), np.arange(8),
                             np.arange(1, 9).astype(float), n_levels=8)
    assert len(list(enumerate_comparisons(distinct, 0))) == 8 * 7 // 2


def test_generate_synthetic_w0_disables_propagation():
    spec0 = SyntheticSpec(50, 20, 4, influence_weight=0.0, propagation_steps=3,
                          edge_prob=0.3, train_frac=0.2, test_frac=0.1)
    tr_a, te_a, _ = generate_synthetic(spec0, seed=5)
    spec_no_prop = SyntheticSpec(50, 20, 4, influence_weight=0.0,
                                 propagation_steps=0, edge_prob=0.3,
                                 train_frac=0.2, test_frac=0.1)
    tr_b, te_b, _ = generate_synthetic(spec_no_prop, seed=5)
    assert tr_a == tr_b and te_a == te_b


def test_generate_synthetic_t0_keeps_factors():
    spec = SyntheticSpec(30, 10, 3, influence_weight=0.8, propagation_steps=0,
                         edge_prob=0.2, train_frac=0.3, test_frac=0.1)
    train, test, graph = generate_synthetic(spec, seed=2)
    # With T=0, ratings are exactly the inner products of the initial draws.
    rng = np.random.default_rng(2)
    user_fac = rng.standard_normal((30, 3))
    item_fac = rng.standard_normal((10, 3))
    dense = user_fac @ item_fac.T
    users, items, ratings = train.triples()
    assert np.allclose(ratings, dense[users, items], rtol=0, atol=0)


def test_generate_synthetic_disjoint_and_errors():
    spec = SyntheticSpec(20, 10, 2, train_frac=0.4, test_frac=0.3)
    train, test, _ = generate_synthetic(spec, seed=0)
    tru, tri, _ = train.triples()
    teu, tei, _ = test.triples()
    assert not set(zip(tru.tolist(), tri.tolist())) & set(zip(teu.tolist(), tei.tolist()))
    with pytest.raises(ConfigError):
        SyntheticSpec(10, 10, 2, train_frac=0.7, test_frac=0.5).validate()
    with pytest.raises(ConfigError):
        SyntheticSpec(10, 10, 2, influence_weight=1.5).validate()
