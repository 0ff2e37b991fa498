"""Ranking and regression metrics, each with a plain reference twin.

Two candidate policies cover all evaluations: rank the user's test items only
(NDCG), or rank every item the user did not rate in training (precision,
recall, MAP, half-life utility). Score ties always break toward the smaller
item index so results are deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import MetricError

__all__ = [
    "ndcg_at_k", "precision_at_k_implicit", "precision_at_k_explicit",
    "pairwise_error", "map_score", "recall_at_k", "hlu", "rmse",
    "ranked_candidates", "write_metrics_report", "format_metrics_report",
]


def _users_with_test(test):
    return np.nonzero(np.diff(test.user_ptr) > 0)[0]


def ranked_candidates(model, train, user):
    """All items the user did not rate in training, best predicted first.

    Ties break toward the smaller item index.
    """
    scores = model.user_scores(user)
    train_items, _ = train.user_row(user)
    mask = np.ones(scores.size, dtype=bool)
    mask[train_items] = False
    candidates = np.nonzero(mask)[0]
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order]


def ndcg_at_k(model, test, k):
    """Mean over users of DCG@k over their test items divided by the ideal DCG@k.

    The gain of a rank-l item is (2^rating - 1) / log2(l + 1); users without
    test ratings are excluded.
    """
    if k < 1:
        raise MetricError("k must be >= 1")
    users = _users_with_test(test)
    if users.size == 0:
        raise MetricError("no user has test ratings")
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    total = 0.0
    for i in users:
        items, ratings = test.user_row(i)
        scores = model.predict(np.full(items.size, i), items)
        order = np.lexsort((items, -scores))
        gains = 2.0 ** ratings - 1.0
        kk = min(k, items.size)
        dcg = float(np.sum(gains[order[:kk]] * discounts[:kk]))
        ideal = float(np.sum(np.sort(gains)[::-1][:kk] * discounts[:kk]))
        total += dcg / ideal if ideal > 0 else 1.0
    return total / users.size


def precision_at_k_implicit(model, train, test, k):
    """Fraction of the top k recommended unseen items that are test positives.

    Candidates are all items the user did not rate in training. Users with
    fewer than k candidates are scored over what they have with the
    denominator unchanged.
    """
    if k < 1:
        raise MetricError("k must be >= 1")
    users = _users_with_test(test)
    if users.size == 0:
        raise MetricError("no user has test entries")
    hits = 0
    for i in users:
        ranked = ranked_candidates(model, train, i)[:k]
        test_items, test_vals = test.user_row(i)
        positives = set(test_items[test_vals == 1.0].tolist())
        hits += sum(1 for j in ranked if int(j) in positives)
    return hits / (users.size * k)


def precision_at_k_explicit(model, train, test, k, relevance_threshold=4):
    """As the implicit variant, but a hit is a test rating at or above the threshold."""
    if k < 1:
        raise MetricError("k must be >= 1")
    users = _users_with_test(test)
    if users.size == 0:
        raise MetricError("no user has test entries")
    hits = 0
    for i in users:
        ranked = ranked_candidates(model, train, i)[:k]
        test_items, test_vals = test.user_row(i)
        relevant = set(test_items[test_vals >= relevance_threshold].tolist())
        hits += sum(1 for j in ranked if int(j) in relevant)
    return hits / (users.size * k)


def pairwise_error(model, test):
    """Fraction of the test's implied preference pairs the model mis-orders.

    A pair is wrong when the preferred item's score is not strictly higher;
    exact score ties count as errors so the metric is deterministic.
    """
    wrong = 0
    total = 0
    for i in _users_with_test(test):
        items, ratings = test.user_row(i)
        if items.size < 2:
            continue
        scores = model.predict(np.full(items.size, i), items)
        higher = ratings[:, None] > ratings[None, :]
        bad = scores[:, None] <= scores[None, :]
        wrong += int(np.sum(higher & bad))
        total += int(np.sum(higher))
    if total == 0:
        raise MetricError("test data implies no preference pairs")
    return wrong / total


def map_score(model, train, test, relevance_threshold=1):
    """Mean average precision over the unseen-item candidate ranking."""
    users = _users_with_test(test)
    aps = []
    for i in users:
        test_items, test_vals = test.user_row(i)
        relevant = set(test_items[test_vals >= relevance_threshold].tolist())
        if not relevant:
            continue
        ranked = ranked_candidates(model, train, i)
        found = 0
        ap = 0.0
        for pos, j in enumerate(ranked, start=1):
            if int(j) in relevant:
                found += 1
                ap += found / pos
        aps.append(ap / len(relevant))
    if not aps:
        raise MetricError("no user has relevant test items")
    return float(np.mean(aps))


def recall_at_k(model, train, test, k, relevance_threshold=1):
    """Mean fraction of each user's relevant test items found in the top k."""
    if k < 1:
        raise MetricError("k must be >= 1")
    users = _users_with_test(test)
    vals = []
    for i in users:
        test_items, test_vals = test.user_row(i)
        relevant = set(test_items[test_vals >= relevance_threshold].tolist())
        if not relevant:
            continue
        ranked = ranked_candidates(model, train, i)[:k]
        got = sum(1 for j in ranked if int(j) in relevant)
        vals.append(got / len(relevant))
    if not vals:
        raise MetricError("no user has relevant test items")
    return float(np.mean(vals))


def hlu(model, train, test, halflife=5.0, neutral=0.0, max_rank=None):
    """Half-life utility: positive part of (rating - neutral), halved every
    (halflife - 1) rank positions down the recommendation list."""
    if halflife <= 1:
        raise MetricError("halflife must be > 1")
    users = _users_with_test(test)
    if users.size == 0:
        raise MetricError("no user has test entries")
    total = 0.0
    for i in users:
        ranked = ranked_candidates(model, train, i)
        if max_rank is not None:
            ranked = ranked[:max_rank]
        test_items, test_vals = test.user_row(i)
        lookup = dict(zip(test_items.tolist(), test_vals.tolist()))
        util = 0.0
        for pos, j in enumerate(ranked, start=1):
            rating = lookup.get(int(j))
            if rating is not None and rating > neutral:
                util += (rating - neutral) / 2.0 ** ((pos - 1) / (halflife - 1))
        total += util
    return total / users.size


def rmse(model, test):
    users, items, ratings = test.triples()
    if ratings.size == 0:
        raise MetricError("empty test set")
    preds = model.predict(users, items)
    return float(np.sqrt(np.mean((ratings - preds) ** 2)))


# ---------------------------------------------------------------------------
# reference implementations (simple loops, used to validate the above)
# ---------------------------------------------------------------------------

def _ranked_candidates_reference(model, train, user):
    scores = model.user_scores(user)
    train_items = set(train.user_row(user)[0].tolist())
    candidates = [j for j in range(train.n_items) if j not in train_items]
    return sorted(candidates, key=lambda j: (-scores[j], j))


def ndcg_at_k_reference(model, test, k):
    users = _users_with_test(test)
    vals = []
    for i in users:
        items, ratings = test.user_row(i)
        scores = model.predict(np.full(items.size, i), items)
        order = sorted(range(items.size), key=lambda a: (-scores[a], items[a]))
        dcg = 0.0
        for pos, a in enumerate(order[:k], start=1):
            dcg += (2.0 ** ratings[a] - 1.0) / np.log2(pos + 1)
        ideal_order = sorted(range(items.size), key=lambda a: -ratings[a])
        idcg = 0.0
        for pos, a in enumerate(ideal_order[:k], start=1):
            idcg += (2.0 ** ratings[a] - 1.0) / np.log2(pos + 1)
        vals.append(dcg / idcg if idcg > 0 else 1.0)
    return float(np.mean(vals))


def precision_at_k_implicit_reference(model, train, test, k):
    users = _users_with_test(test)
    hits = 0
    for i in users:
        ranked = _ranked_candidates_reference(model, train, i)[:k]
        test_items, test_vals = test.user_row(i)
        positives = {int(j) for j, v in zip(test_items, test_vals) if v == 1.0}
        hits += sum(1 for j in ranked if j in positives)
    return hits / (len(users) * k)


def precision_at_k_explicit_reference(model, train, test, k, relevance_threshold=4):
    users = _users_with_test(test)
    hits = 0
    for i in users:
        ranked = _ranked_candidates_reference(model, train, i)[:k]
        test_items, test_vals = test.user_row(i)
        relevant = {int(j) for j, v in zip(test_items, test_vals)
                    if v >= relevance_threshold}
        hits += sum(1 for j in ranked if j in relevant)
    return hits / (len(users) * k)


def pairwise_error_reference(model, test):
    wrong = 0
    total = 0
    for i in range(test.n_users):
        items, ratings = test.user_row(i)
        scores = model.predict(np.full(items.size, i), items)
        for a in range(items.size):
            for b in range(items.size):
                if ratings[a] > ratings[b]:
                    total += 1
                    if scores[a] <= scores[b]:
                        wrong += 1
    if total == 0:
        raise MetricError("test data implies no preference pairs")
    return wrong / total


def map_score_reference(model, train, test, relevance_threshold=1):
    users = _users_with_test(test)
    aps = []
    for i in users:
        test_items, test_vals = test.user_row(i)
        relevant = {int(j) for j, v in zip(test_items, test_vals)
                    if v >= relevance_threshold}
        if not relevant:
            continue
        ranked = _ranked_candidates_reference(model, train, i)
        found = 0
        ap = 0.0
        for pos, j in enumerate(ranked, start=1):
            if j in relevant:
                found += 1
                ap += found / pos
        aps.append(ap / len(relevant))
    return float(np.mean(aps))


def recall_at_k_reference(model, train, test, k, relevance_threshold=1):
    users = _users_with_test(test)
    vals = []
    for i in users:
        test_items, test_vals = test.user_row(i)
        relevant = {int(j) for j, v in zip(test_items, test_vals)
                    if v >= relevance_threshold}
        if not relevant:
            continue
        ranked = _ranked_candidates_reference(model, train, i)[:k]
        vals.append(sum(1 for j in ranked if j in relevant) / len(relevant))
    return float(np.mean(vals))


def hlu_reference(model, train, test, halflife=5.0, neutral=0.0, max_rank=None):
    users = _users_with_test(test)
    vals = []
    for i in users:
        ranked = _ranked_candidates_reference(model, train, i)
        if max_rank is not None:
            ranked = ranked[:max_rank]
        test_items, test_vals = test.user_row(i)
        lookup = {int(j): v for j, v in zip(test_items, test_vals)}
        util = 0.0
        for pos, j in enumerate(ranked, start=1):
            if j in lookup and lookup[j] > neutral:
                util += (lookup[j] - neutral) / 2.0 ** ((pos - 1) / (halflife - 1))
        vals.append(util)
    return float(np.mean(vals))


def rmse_reference(model, test):
    errs = []
    for i in range(test.n_users):
        items, ratings = test.user_row(i)
        for j, x in zip(items, ratings):
            errs.append((x - float(model.user_factors[i] @ model.item_factors[j])) ** 2)
    return float(np.sqrt(np.mean(errs)))


# ---------------------------------------------------------------------------
# report format
# ---------------------------------------------------------------------------

def format_metrics_report(rows):
    """Tab-separated "metric k value" lines in the given (stable) order."""
    lines = []
    for metric, k, value in rows:
        lines.append(f"{metric}\t{'-' if k is None else k}\t{value!r}")
    return "\n".join(lines) + "\n"


def write_metrics_report(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_metrics_report(rows))


def parse_metrics_report(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            metric, k, value = line.rstrip("\n").split("\t")
            rows.append((metric, None if k == "-" else int(k), float(value)))
    return rows
