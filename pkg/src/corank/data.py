"""Sparse rating storage, file IO, splitting, binarization, and synthetic data.

Ratings live in a dual-CSR structure (row-major by user and column-major by
item) so that user-oriented solvers and item-oriented solvers both get sorted
contiguous access. Three modes are supported:

* ``explicit``   integer levels 1..L
* ``implicit``   positives stored as 1s, with an optional companion list of
  observed zeros kept separate from never-observed entries
* ``continuous`` real-valued scores (synthetic data)
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .graphs import Graph, erdos_renyi

EXPLICIT = "explicit"
IMPLICIT = "implicit"
CONTINUOUS = "continuous"


def _csr_from_triples(n_rows, rows, cols, vals):
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(ptr, rows + 1, 1)
    np.cumsum(ptr, out=ptr)
    return ptr, cols, vals


class RatingsMatrix:
    """Sparse user x item ratings stored in both row- and column-major layouts.

    Attributes:
        n_users, n_items: matrix dimensions.
        user_ptr/user_items/user_ratings: CSR by user, item indices sorted.
        item_ptr/item_users/item_ratings: CSR by item, user indices sorted.
        mode: "explicit", "implicit", or "continuous".
        n_levels: number of rating levels L (2 for implicit, None for continuous).
        zero_ptr/zero_items: observed-zero companion (implicit only, may be None).
        user_ids/item_ids: external-id remap tables from the loader (optional).
    """

    def __init__(self, n_users, n_items, users, items, ratings, mode=EXPLICIT,
                 n_levels=None, zero_users=None, zero_items=None):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        ratings = np.asarray(ratings, dtype=np.float64)
        if not (users.size == items.size == ratings.size):
            raise DataError("users, items, ratings must have equal length")
        if users.size and (users.min() < 0 or users.max() >= n_users):
            raise DataError("user index out of range")
        if items.size and (items.min() < 0 or items.max() >= n_items):
            raise DataError("item index out of range")
        self.n_users = int(n_users)
        self.n_items = int(n_items)
        self.mode = mode
        self.user_ptr, self.user_items, self.user_ratings = _csr_from_triples(
            n_users, users, items, ratings)
        self._check_duplicates()
        self.item_ptr, self.item_users, self.item_ratings = _csr_from_triples(
            n_items, items, users, ratings)
        if mode == EXPLICIT:
            if ratings.size and (np.any(ratings < 1) or np.any(ratings != np.round(ratings))):
                raise DataError("explicit ratings must be integer levels >= 1")
            inferred = int(ratings.max()) if ratings.size else 1
            self.n_levels = int(n_levels) if n_levels is not None else inferred
            if ratings.size and ratings.max() > self.n_levels:
                raise DataError("rating exceeds declared level count")
        elif mode == IMPLICIT:
            if ratings.size and not np.all(np.isin(ratings, (0.0, 1.0))):
                raise DataError("implicit ratings must be 0 or 1")
            self.n_levels = 2
        elif mode == CONTINUOUS:
            self.n_levels = None
        else:
            raise ConfigError(f"unknown ratings mode {mode!r}")
        if zero_users is not None:
            zero_users = np.asarray(zero_users, dtype=np.int64)
            zero_items = np.asarray(zero_items, dtype=np.int64)
            self.zero_ptr, self.zero_items, _ = _csr_from_triples(
                n_users, zero_users, zero_items, np.zeros(zero_users.size))
        else:
            self.zero_ptr = None
            self.zero_items = None
        self.user_ids = None
        self.item_ids = None

    def _check_duplicates(self):
        u = np.repeat(np.arange(self.n_users), np.diff(self.user_ptr))
        j = self.user_items
        if u.size > 1:
            dup = (u[1:] == u[:-1]) & (j[1:] == j[:-1])
            if np.any(dup):
                at = int(np.nonzero(dup)[0][0])
                raise DataError(f"duplicate rating for user {u[at]}, item {j[at]}")

    @property
    def nnz(self):
        return int(self.user_items.size)

    def user_row(self, i):
        """(item indices, ratings) observed for user i, items sorted ascending."""
        lo, hi = self.user_ptr[i], self.user_ptr[i + 1]
        return self.user_items[lo:hi], self.user_ratings[lo:hi]

    def item_col(self, j):
        lo, hi = self.item_ptr[j], self.item_ptr[j + 1]
        return self.item_users[lo:hi], self.item_ratings[lo:hi]

    def user_counts(self):
        return np.diff(self.user_ptr)

    def user_zero_row(self, i):
        """Observed-zero item indices for user i (empty if no companion)."""
        if self.zero_ptr is None:
            return np.empty(0, dtype=np.int64)
        return self.zero_items[self.zero_ptr[i]:self.zero_ptr[i + 1]]

    def triples(self):
        """(users, items, ratings) arrays sorted by (user, item)."""
        users = np.repeat(np.arange(self.n_users, dtype=np.int64), np.diff(self.user_ptr))
        return users, self.user_items.copy(), self.user_ratings.copy()

    def to_dense(self, fill=0.0):
        dense = np.full((self.n_users, self.n_items), fill, dtype=np.float64)
        users, items, ratings = self.triples()
        dense[users, items] = ratings
        return dense

    def __eq__(self, other):
        if not isinstance(other, RatingsMatrix):
            return NotImplemented
        same = (
            self.n_users == other.n_users
            and self.n_items == other.n_items
            and self.mode == other.mode
            and self.n_levels == other.n_levels
            and np.array_equal(self.user_ptr, other.user_ptr)
            and np.array_equal(self.user_items, other.user_items)
            and np.array_equal(self.user_ratings, other.user_ratings)
        )
        if not same:
            return False
        if (self.zero_ptr is None) != (other.zero_ptr is None):
            return False
        if self.zero_ptr is not None:
            return (np.array_equal(self.zero_ptr, other.zero_ptr)
                    and np.array_equal(self.zero_items, other.zero_items))
        return True


@dataclass
class TrainTestSplit:
    train: RatingsMatrix
    test: RatingsMatrix
    seed: int
    per_user_train_count: int | str


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic rating generator."""

    n_users: int
    n_items: int
    rank: int
    influence_weight: float = 0.6
    propagation_steps: int = 3
    edge_prob: float = 0.001
    train_frac: float = 0.05
    test_frac: float = 0.02

    def validate(self):
        if not 0.0 <= self.influence_weight <= 1.0:
            raise ConfigError("influence_weight must be in [0, 1]")
        if self.train_frac < 0 or self.test_frac < 0 or self.train_frac + self.test_frac > 1:
            raise ConfigError("train_frac + test_frac must lie in [0, 1]")
        if self.n_users < 1 or self.n_items < 1 or self.rank < 1:
            raise ConfigError("n_users, n_items, rank must be positive")
        if self.propagation_steps < 0:
            raise ConfigError("propagation_steps must be >= 0")


def _detect_separator(line):
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return None  # whitespace


_HEADER_TAG = "corank-ratings"


def load_ratings(source, mode=None):
    """Parse "user item rating" lines into a RatingsMatrix.

    The separator (tab, comma, or whitespace) is detected from the first data
    line and applied to the whole file. External ids are remapped to dense
    0-based indices, sorted ascending; the remap tables are retained on the
    returned matrix as user_ids / item_ids. Files written by save_ratings
    carry a shape header that pins dimensions, level count, and mode exactly
    (ids are then taken as dense indices). mode defaults to the header's
    value, else "explicit".
    """
    close = False
    if isinstance(source, str):
        stream = open(source, "r", encoding="utf-8")
        close = True
    elif isinstance(source, bytes):
        stream = io.StringIO(source.decode("utf-8"))
    else:
        stream = source
    raw_users, raw_items, raw_ratings = [], [], []
    sep = None
    sep_known = False
    header = None
    try:
        for line_no, line in enumerate(stream, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == _HEADER_TAG:
                    header = dict(p.split("=", 1) for p in parts[1:])
                continue
            if not sep_known:
                sep = _detect_separator(line)
                sep_known = True
            parts = line.split(sep)
            parts = [p for p in parts if p != ""]
            if len(parts) != 3:
                raise ParseError(f"expected 'user item rating', got {line!r}", line_no)
            try:
                uid, iid = int(parts[0]), int(parts[1])
                val = float(parts[2])
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from None
            if uid < 0 or iid < 0:
                raise ParseError("ids must be non-negative", line_no)
            raw_users.append(uid)
            raw_items.append(iid)
            raw_ratings.append(val)
    finally:
        if close:
            stream.close()

    raw_users = np.array(raw_users, dtype=np.int64)
    raw_items = np.array(raw_items, dtype=np.int64)
    raw_ratings = np.array(raw_ratings, dtype=np.float64)
    if mode is None:
        mode = header.get("mode", EXPLICIT) if header else EXPLICIT
    n_levels = None
    if header is not None:
        n_users, n_items = int(header["users"]), int(header["items"])
        if header.get("levels", "-") != "-":
            n_levels = int(header["levels"])
        users, items = raw_users, raw_items
        user_ids = item_ids = None
    else:
        user_ids, users = np.unique(raw_users, return_inverse=True)
        item_ids, items = np.unique(raw_items, return_inverse=True)
        n_users, n_items = len(user_ids), len(item_ids)

    # Report duplicates in terms of the ids the file actually used.
    key = users * max(n_items, 1) + items
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    dup = np.nonzero(sorted_key[1:] == sorted_key[:-1])[0]
    if dup.size:
        at = order[int(dup[0])]
        raise DataError(
            f"duplicate rating for user {raw_users[at]}, item {raw_items[at]}")

    zero_users = zero_items = None
    if mode == IMPLICIT:
        pos = raw_ratings == 1.0
        neg = raw_ratings == 0.0
        if not np.all(pos | neg):
            raise DataError("implicit mode requires ratings in {0, 1}")
        zero_users, zero_items = users[neg], items[neg]
        users, items, raw_ratings = users[pos], items[pos], raw_ratings[pos]
    matrix = RatingsMatrix(n_users, n_items, users, items, raw_ratings,
                           mode=mode, n_levels=n_levels,
                           zero_users=zero_users, zero_items=zero_items)
    matrix.user_ids = user_ids
    matrix.item_ids = item_ids
    return matrix


def save_ratings(matrix, path, user_ids=None, item_ids=None):
    """Write triples as tab-separated lines; inverse of load_ratings.

    A shape header makes the reload exact (dimensions, levels, mode). Passing
    id tables maps internal indices back to external ids and drops the header
    so the file reads as generic external data. Continuous ratings keep full
    float precision; observed zeros of an implicit matrix become 0 lines.
    """
    users, items, ratings = matrix.triples()
    if matrix.zero_ptr is not None and matrix.zero_items.size:
        zu = np.repeat(np.arange(matrix.n_users, dtype=np.int64), np.diff(matrix.zero_ptr))
        users = np.concatenate([users, zu])
        items = np.concatenate([items, matrix.zero_items])
        ratings = np.concatenate([ratings, np.zeros(zu.size)])
    with open(path, "w", encoding="utf-8") as fh:
        if user_ids is None and item_ids is None:
            levels = matrix.n_levels if matrix.n_levels is not None else "-"
            fh.write(f"# {_HEADER_TAG} mode={matrix.mode} users={matrix.n_users} "
                     f"items={matrix.n_items} levels={levels}\n")
        for u, j, x in zip(users, items, ratings):
            uid = user_ids[u] if user_ids is not None else u
            iid = item_ids[j] if item_ids is not None else j
            if matrix.mode == CONTINUOUS:
                fh.write(f"{uid}\t{iid}\t{float(x)!r}\n")
            else:
                fh.write(f"{uid}\t{iid}\t{int(x)}\n")


def save_mapping(path, ids):
    """Write "external_id internal_index" lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for idx, ext in enumerate(ids):
            fh.write(f"{ext} {idx}\n")


def split_fixed_count(matrix, n_train, min_test, seed):
    """Per-user split: exactly n_train sampled train entries, the rest test.

    Users with fewer than n_train + min_test ratings are discarded entirely.
    Dimensions are preserved so user/item indices stay aligned with any side
    graph.
    """
    if n_train < 1 or min_test < 1:
        raise ConfigError("n_train and min_test must be >= 1")
    rng = np.random.default_rng(seed)
    tr_users, tr_items, tr_ratings = [], [], []
    te_users, te_items, te_ratings = [], [], []
    survivors = 0
    for i in range(matrix.n_users):
        items, ratings = matrix.user_row(i)
        if items.size < n_train + min_test:
            continue
        survivors += 1
        picked = rng.choice(items.size, size=n_train, replace=False)
        mask = np.zeros(items.size, dtype=bool)
        mask[picked] = True
        tr_users.append(np.full(n_train, i, dtype=np.int64))
        tr_items.append(items[mask])
        tr_ratings.append(ratings[mask])
        te_users.append(np.full(items.size - n_train, i, dtype=np.int64))
        te_items.append(items[~mask])
        te_ratings.append(ratings[~mask])
    if survivors == 0:
        raise DataError(f"no user has at least {n_train + min_test} ratings; split is empty")

    def build(us, js, rs):
        return RatingsMatrix(
            matrix.n_users, matrix.n_items,
            np.concatenate(us), np.concatenate(js), np.concatenate(rs),
            mode=matrix.mode,
            n_levels=matrix.n_levels if matrix.mode == EXPLICIT else None)

    return TrainTestSplit(build(tr_users, tr_items, tr_ratings),
                          build(te_users, te_items, te_ratings),
                          seed=seed, per_user_train_count=n_train)


def binarize(matrix, threshold):
    """Map explicit levels to implicit 0/1 at the given threshold.

    Entries rated >= threshold become observed 1s; all other observed entries
    move to the observed-zero companion list (they are distinct from entries
    that were never rated). The result has two levels.
    """
    if matrix.mode != EXPLICIT:
        raise ConfigError("binarize requires an explicit-level matrix")
    if not 1 <= threshold <= matrix.n_levels:
        raise ConfigError(
            f"threshold {threshold} outside 1..{matrix.n_levels}")
    users, items, ratings = matrix.triples()
    pos = ratings >= threshold
    return RatingsMatrix(
        matrix.n_users, matrix.n_items,
        users[pos], items[pos], np.ones(int(pos.sum())),
        mode=IMPLICIT,
        zero_users=users[~pos], zero_items=items[~pos])


def enumerate_comparisons(matrix, user):
    """Yield (j, k, +1) for each unordered item pair of user with rating_j > rating_k.

    Pairs with equal ratings are never generated; each unordered pair appears
    once in the canonical orientation (preferred item first).
    """
    if not 0 <= user < matrix.n_users:
        raise ConfigError(f"user {user} out of range")
    items, ratings = matrix.user_row(user)
    for a in range(items.size):
        for b in range(a + 1, items.size):
            if ratings[a] > ratings[b]:
                yield int(items[a]), int(items[b]), 1
            elif ratings[b] > ratings[a]:
                yield int(items[b]), int(items[a]), 1


def generate_synthetic(spec, seed):
    """Draw a rating matrix whose user factors were smoothed along a random graph.

    User and item factor tables start standard normal; for each of the T
    propagation steps every user row is replaced by
    ``w * (sum of neighbor rows) + (1 - w) * own row``, all rows updating from
    the previous step simultaneously. Ratings are the factor inner products,
    and disjoint train/test cells are sampled uniformly.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    n, m, r = spec.n_users, spec.n_items, spec.rank
    user_fac = rng.standard_normal((n, r))
    item_fac = rng.standard_normal((m, r))
    graph = erdos_renyi(n, spec.edge_prob, rng)
    w = spec.influence_weight
    adj = graph.adjacency()
    for _ in range(spec.propagation_steps):
        user_fac = w * (adj @ user_fac) + (1.0 - w) * user_fac
    dense = user_fac @ item_fac.T

    total = n * m
    n_train = int(round(spec.train_frac * total))
    n_test = int(round(spec.test_frac * total))
    picked = rng.permutation(total)[:n_train + n_test]
    tr, te = picked[:n_train], picked[n_train:]

    def build(cells):
        users, items = cells // m, cells % m
        return RatingsMatrix(n, m, users, items, dense[users, items], mode=CONTINUOUS)

    return build(tr), build(te), graph
