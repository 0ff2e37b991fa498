"""Pairwise collaborative ranking with the squared hinge loss.

The objective is sum over comparisons of max(0, 1 - y * u_i.(v_j - v_k))^2
plus l2 on both factor tables, minimized by alternating truncated Newton:
conjugate gradient on the item table, and independent per-user ranking-SVM
subproblems on the user table.

Three interchangeable kernel families compute the item-side gradient and
Hessian-vector product:

* naive      walks every comparison doing O(r) work per pair; the oracle
* fast       walks every comparison doing O(1) work per pair, accumulating a
             per-item scalar, then emits rank-r updates per item
* scan       never touches pairs: per user, items are sorted by score and two
             linear sweeps with Fenwick-tree level accumulators produce the
             same per-item scalars in O(d log d) where d is the user's item
             count

Comparisons are kept canonical: the preferred item first, label +1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data import RatingsMatrix
from .errors import ConfigError, ParseError, TrainingError
from .factors import FactorModel

logger = logging.getLogger(__name__)


class RatingComparisons:
    """Per-user rated items with rank-compressed levels; pairs stay implicit.

    Every unordered item pair of a user with different levels is one
    comparison. Levels are compressed per user (1..level_count[i]) so the
    sweep kernels work for arbitrary real ratings.
    """

    def __init__(self, user_ptr, items, levels, level_count, n_items):
        self.user_ptr = user_ptr
        self.items = items
        self.levels = levels
        self.level_count = level_count
        self.n_users = user_ptr.size - 1
        self.n_items = n_items

    @classmethod
    def from_matrix(cls, matrix):
        levels = np.zeros(matrix.nnz, dtype=np.int64)
        level_count = np.zeros(matrix.n_users, dtype=np.int64)
        for i in range(matrix.n_users):
            lo, hi = matrix.user_ptr[i], matrix.user_ptr[i + 1]
            uniq, inv = np.unique(matrix.user_ratings[lo:hi], return_inverse=True)
            levels[lo:hi] = inv + 1
            level_count[i] = uniq.size
        return cls(matrix.user_ptr.copy(), matrix.user_items.astype(np.int64),
                   levels, level_count, matrix.n_items)

    @property
    def pair_count(self):
        total = 0
        for i in range(self.n_users):
            lo, hi = self.user_ptr[i], self.user_ptr[i + 1]
            cnt = hi - lo
            per_level = np.bincount(self.levels[lo:hi].astype(np.int64))
            total += (cnt * cnt - int(np.sum(per_level ** 2))) // 2
        return total

    def materialize(self):
        """Expand into explicit canonical comparisons (small data only)."""
        item_ptr = [0]
        all_items = []
        pair_ptr = [0]
        pa, pb = [], []
        for i in range(self.n_users):
            lo, hi = self.user_ptr[i], self.user_ptr[i + 1]
            its = self.items[lo:hi]
            lvs = self.levels[lo:hi]
            all_items.append(its)
            item_ptr.append(item_ptr[-1] + its.size)
            for a in range(its.size):
                for b in range(its.size):
                    if lvs[a] > lvs[b]:
                        pa.append(a)
                        pb.append(b)
            pair_ptr.append(len(pa))
        return PairComparisons(
            np.array(item_ptr, dtype=np.int64),
            np.concatenate(all_items) if all_items else np.empty(0, dtype=np.int64),
            np.array(pair_ptr, dtype=np.int64),
            np.array(pa, dtype=np.int64), np.array(pb, dtype=np.int64),
            self.n_items)


class PairComparisons:
    """Explicit canonical comparisons grouped by user.

    items holds each user's distinct compared items; pa/pb index into the
    user's slice of items, preferred item first.
    """

    def __init__(self, item_ptr, items, pair_ptr, pa, pb, n_items):
        self.item_ptr = item_ptr
        self.items = items
        self.pair_ptr = pair_ptr
        self.pa = pa
        self.pb = pb
        self.n_users = item_ptr.size - 1
        self.n_items = n_items

    @property
    def pair_count(self):
        return int(self.pa.size)

    @classmethod
    def from_arrays(cls, n_users, n_items, users, item_j, item_k, label):
        """Build from raw (user, preferred-or-not) tuples; label -1 swaps the pair."""
        users = np.asarray(users, dtype=np.int64)
        item_j = np.asarray(item_j, dtype=np.int64).copy()
        item_k = np.asarray(item_k, dtype=np.int64).copy()
        label = np.asarray(label, dtype=np.int64)
        if not np.all(np.isin(label, (-1, 1))):
            raise ConfigError("labels must be +1 or -1")
        swap = label == -1
        item_j[swap], item_k[swap] = item_k[swap], item_j[swap]
        order = np.argsort(users, kind="stable")
        users, item_j, item_k = users[order], item_j[order], item_k[order]
        item_ptr = [0]
        all_items = []
        pair_ptr = [0]
        pa, pb = [], []
        bounds = np.searchsorted(users, np.arange(n_users + 1))
        for i in range(n_users):
            lo, hi = bounds[i], bounds[i + 1]
            its = np.unique(np.concatenate([item_j[lo:hi], item_k[lo:hi]]))
            local = {int(x): a for a, x in enumerate(its)}
            all_items.append(its)
            item_ptr.append(item_ptr[-1] + its.size)
            pa.extend(local[int(x)] for x in item_j[lo:hi])
            pb.extend(local[int(x)] for x in item_k[lo:hi])
            pair_ptr.append(len(pa))
        return cls(np.array(item_ptr, dtype=np.int64),
                   np.concatenate(all_items) if all_items else np.empty(0, dtype=np.int64),
                   np.array(pair_ptr, dtype=np.int64),
                   np.array(pa, dtype=np.int64), np.array(pb, dtype=np.int64),
                   n_items)


def load_pairs(path, n_users=None, n_items=None):
    """Read "user j k y" comparison lines (dense 0-based indices)."""
    us, js, ks, ys = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(f"expected 'user j k y', got {line!r}", line_no)
            try:
                us.append(int(parts[0]))
                js.append(int(parts[1]))
                ks.append(int(parts[2]))
                ys.append(int(parts[3]))
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from None
    us, js, ks = np.array(us), np.array(js), np.array(ks)
    if n_users is None:
        n_users = int(us.max()) + 1 if us.size else 0
    if n_items is None:
        n_items = int(max(js.max(), ks.max())) + 1 if js.size else 0
    return PairComparisons.from_arrays(n_users, n_items, us, js, ks, np.array(ys))


@dataclass
class CrHyper:
    """Knobs of the alternating truncated-Newton trainer."""

    rank: int = 10
    lam: float = 1.0
    outer_iters: int = 30
    rel_tol: float = 1e-4
    cg_max_iters: int = 25
    cg_tol: float = 1e-2
    ls_shrink: float = 0.5
    ls_c1: float = 1e-4
    seed: int = 0

    def validate(self):
        if not 0 < self.cg_tol < 1 or not 0 < self.rel_tol < 1:
            raise ConfigError("tolerances must be in (0, 1)")
        if not 0 < self.ls_shrink < 1:
            raise ConfigError("ls_shrink must be in (0, 1)")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _fw_add(tree, size, level, value):
    i = level
    while i <= size:
        tree[i] += value
        i += i & (-i)


@njit(cache=True)
def _fw_prefix(tree, level):
    s = 0.0
    i = level
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(cache=True)
def _scores(u, items, lo, hi, item_fac):
    out = np.empty(hi - lo)
    for a in range(hi - lo):
        s = 0.0
        row = items[lo + a]
        for t in range(u.size):
            s += u[t] * item_fac[row, t]
        out[a] = s
    return out


@njit(cache=True)
def _hinge_sum_levels(user_ptr, items, levels, user_fac, item_fac):
    acc = 0.0
    for i in range(user_ptr.size - 1):
        lo, hi = user_ptr[i], user_ptr[i + 1]
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        for a in range(hi - lo):
            for b in range(hi - lo):
                if levels[lo + a] > levels[lo + b]:
                    margin = m[a] - m[b]
                    if margin < 1.0:
                        acc += (1.0 - margin) * (1.0 - margin)
    return acc


@njit(cache=True)
def _hinge_sum_pairs(item_ptr, items, pair_ptr, pa, pb, user_fac, item_fac):
    acc = 0.0
    for i in range(item_ptr.size - 1):
        lo, hi = item_ptr[i], item_ptr[i + 1]
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        for p in range(pair_ptr[i], pair_ptr[i + 1]):
            margin = m[pa[p]] - m[pb[p]]
            if margin < 1.0:
                acc += (1.0 - margin) * (1.0 - margin)
    return acc


@njit(cache=True)
def _grad_naive_levels(user_ptr, items, levels, user_fac, item_fac, grad):
    rank = user_fac.shape[1]
    for i in range(user_ptr.size - 1):
        lo, hi = user_ptr[i], user_ptr[i + 1]
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        for a in range(hi - lo):
            for b in range(hi - lo):
                if levels[lo + a] > levels[lo + b]:
                    margin = m[a] - m[b]
                    if margin < 1.0:
                        coef = 2.0 * (margin - 1.0)
                        ja = items[lo + a]
                        jb = items[lo + b]
                        for t in range(rank):
                            grad[ja, t] += coef * user_fac[i, t]
                            grad[jb, t] -= coef * user_fac[i, t]


@njit(cache=True)
def _grad_naive_pairs(item_ptr, items, pair_ptr, pa, pb, user_fac, item_fac, grad):
    rank = user_fac.shape[1]
    for i in range(item_ptr.size - 1):
        lo, hi = item_ptr[i], item_ptr[i + 1]
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        for p in range(pair_ptr[i], pair_ptr[i + 1]):
            margin = m[pa[p]] - m[pb[p]]
            if margin < 1.0:
                coef = 2.0 * (margin - 1.0)
                ja = items[lo + pa[p]]
                jb = items[lo + pb[p]]
                for t in range(rank):
                    grad[ja, t] += coef * user_fac[i, t]
                    grad[jb, t] -= coef * user_fac[i, t]


@njit(cache=True)
def _grad_fast_levels(user_ptr, items, levels, user_fac, item_fac, grad):
    rank = user_fac.shape[1]
    for i in range(user_ptr.size - 1):
        lo, hi = user_ptr[i], user_ptr[i + 1]
        cnt = hi - lo
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        t_coef = np.zeros(cnt)
        for a in range(cnt):
            for b in range(cnt):
                if levels[lo + a] > levels[lo + b]:
                    margin = m[a] - m[b]
                    if margin < 1.0:
                        coef = 2.0 * (margin - 1.0)
                        t_coef[a] += coef
                        t_coef[b] -= coef
        for a in range(cnt):
            if t_coef[a] != 0.0:
                row = items[lo + a]
                for t in range(rank):
                    grad[row, t] += t_coef[a] * user_fac[i, t]


@njit(cache=True)
def _grad_fast_pairs(item_ptr, items, pair_ptr, pa, pb, user_fac, item_fac, grad):
    rank = user_fac.shape[1]
    for i in range(item_ptr.size - 1):
        lo, hi = item_ptr[i], item_ptr[i + 1]
        cnt = hi - lo
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        t_coef = np.zeros(cnt)
        for p in range(pair_ptr[i], pair_ptr[i + 1]):
            margin = m[pa[p]] - m[pb[p]]
            if margin < 1.0:
                coef = 2.0 * (margin - 1.0)
                t_coef[pa[p]] += coef
                t_coef[pb[p]] -= coef
        for a in range(cnt):
            if t_coef[a] != 0.0:
                row = items[lo + a]
                for t in range(rank):
                    grad[row, t] += t_coef[a] * user_fac[i, t]


@njit(cache=True)
def _hessvec_fast_levels(user_ptr, items, levels, user_fac, item_fac, direction, out):
    rank = user_fac.shape[1]
    for i in range(user_ptr.size - 1):
        lo, hi = user_ptr[i], user_ptr[i + 1]
        cnt = hi - lo
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        bv = _scores(user_fac[i], items, lo, hi, direction)
        t_coef = np.zeros(cnt)
        for a in range(cnt):
            for b in range(cnt):
                if levels[lo + a] > levels[lo + b]:
                    if m[a] - m[b] <= 1.0:
                        coef = 2.0 * (bv[a] - bv[b])
                        t_coef[a] += coef
                        t_coef[b] -= coef
        for a in range(cnt):
            if t_coef[a] != 0.0:
                row = items[lo + a]
                for t in range(rank):
                    out[row, t] += t_coef[a] * user_fac[i, t]


@njit(cache=True)
def _hessvec_fast_pairs(item_ptr, items, pair_ptr, pa, pb, user_fac, item_fac,
                        direction, out):
    rank = user_fac.shape[1]
    for i in range(item_ptr.size - 1):
        lo, hi = item_ptr[i], item_ptr[i + 1]
        cnt = hi - lo
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        bv = _scores(user_fac[i], items, lo, hi, direction)
        t_coef = np.zeros(cnt)
        for p in range(pair_ptr[i], pair_ptr[i + 1]):
            if m[pa[p]] - m[pb[p]] <= 1.0:
                coef = 2.0 * (bv[pa[p]] - bv[pb[p]])
                t_coef[pa[p]] += coef
                t_coef[pb[p]] -= coef
        for a in range(cnt):
            if t_coef[a] != 0.0:
                row = items[lo + a]
                for t in range(rank):
                    out[row, t] += t_coef[a] * user_fac[i, t]


@njit(cache=True)
def _grad_scan(user_ptr, items, levels, level_count, user_fac, item_fac, grad):
    rank = user_fac.shape[1]
    for i in range(user_ptr.size - 1):
        lo, hi = user_ptr[i], user_ptr[i + 1]
        cnt = hi - lo
        if cnt == 0 or level_count[i] <= 1:
            continue
        n_lv = level_count[i]
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        order = np.argsort(m)
        tree_s = np.zeros(n_lv + 1)
        tree_c = np.zeros(n_lv + 1)
        t_coef = np.zeros(cnt)
        # Forward sweep: partners rated higher, with m_b <= m_a + 1.
        total_s = 0.0
        total_c = 0.0
        p = 0
        for q in range(cnt):
            a = order[q]
            thr = m[a] + 1.0
            while p < cnt and m[order[p]] <= thr:
                b = order[p]
                _fw_add(tree_s, n_lv, levels[lo + b], m[b])
                _fw_add(tree_c, n_lv, levels[lo + b], 1.0)
                total_s += m[b]
                total_c += 1.0
                p += 1
            lv = levels[lo + a]
            cnt_hi = total_c - _fw_prefix(tree_c, lv)
            sum_hi = total_s - _fw_prefix(tree_s, lv)
            t_coef[a] += 2.0 * (thr * cnt_hi - sum_hi)
        # Backward sweep: partners rated lower, with m_b >= m_a - 1.
        for l in range(n_lv + 1):
            tree_s[l] = 0.0
            tree_c[l] = 0.0
        p = cnt - 1
        for q in range(cnt - 1, -1, -1):
            a = order[q]
            thr = m[a] - 1.0
            while p >= 0 and m[order[p]] >= thr:
                b = order[p]
                _fw_add(tree_s, n_lv, levels[lo + b], m[b])
                _fw_add(tree_c, n_lv, levels[lo + b], 1.0)
                p -= 1
            lv = levels[lo + a]
            cnt_lo = _fw_prefix(tree_c, lv - 1)
            sum_lo = _fw_prefix(tree_s, lv - 1)
            t_coef[a] += 2.0 * (thr * cnt_lo - sum_lo)
        for a in range(cnt):
            if t_coef[a] != 0.0:
                row = items[lo + a]
                for t in range(rank):
                    grad[row, t] += t_coef[a] * user_fac[i, t]


@njit(cache=True)
def _hessvec_scan(user_ptr, items, levels, level_count, user_fac, item_fac,
                  direction, out):
    rank = user_fac.shape[1]
    for i in range(user_ptr.size - 1):
        lo, hi = user_ptr[i], user_ptr[i + 1]
        cnt = hi - lo
        if cnt == 0 or level_count[i] <= 1:
            continue
        n_lv = level_count[i]
        m = _scores(user_fac[i], items, lo, hi, item_fac)
        bv = _scores(user_fac[i], items, lo, hi, direction)
        order = np.argsort(m)
        tree_s = np.zeros(n_lv + 1)
        tree_c = np.zeros(n_lv + 1)
        t_coef = np.zeros(cnt)
        # Forward sweep: active partners rated higher (margin m_b - m_a <= 1).
        total_s = 0.0
        total_c = 0.0
        p = 0
        for q in range(cnt):
            a = order[q]
            thr = m[a] + 1.0
            while p < cnt and m[order[p]] <= thr:
                b = order[p]
                _fw_add(tree_s, n_lv, levels[lo + b], bv[b])
                _fw_add(tree_c, n_lv, levels[lo + b], 1.0)
                total_s += bv[b]
                total_c += 1.0
                p += 1
            lv = levels[lo + a]
            cnt_hi = total_c - _fw_prefix(tree_c, lv)
            sum_hi = total_s - _fw_prefix(tree_s, lv)
            t_coef[a] += 2.0 * (bv[a] * cnt_hi - sum_hi)
        # Backward sweep: active partners rated lower (margin m_a - m_b <= 1).
        for l in range(n_lv + 1):
            tree_s[l] = 0.0
            tree_c[l] = 0.0
        p = cnt - 1
        for q in range(cnt - 1, -1, -1):
            a = order[q]
            thr = m[a] - 1.0
            while p >= 0 and m[order[p]] >= thr:
                b = order[p]
                _fw_add(tree_s, n_lv, levels[lo + b], bv[b])
                _fw_add(tree_c, n_lv, levels[lo + b], 1.0)
                p -= 1
            lv = levels[lo + a]
            cnt_lo = _fw_prefix(tree_c, lv - 1)
            sum_lo = _fw_prefix(tree_s, lv - 1)
            t_coef[a] += 2.0 * (bv[a] * cnt_lo - sum_lo)
        for a in range(cnt):
            if t_coef[a] != 0.0:
                row = items[lo + a]
                for t in range(rank):
                    out[row, t] += t_coef[a] * user_fac[i, t]


@njit(cache=True)
def _solve_user(u, v_loc, pa, pb, lam, cg_max, cg_tol, ls_shrink, ls_c1):
    """One truncated-Newton step of the per-user ranking-SVM subproblem."""
    rank = u.size
    cnt = v_loc.shape[0]
    n_pairs = pa.size
    m = np.empty(cnt)
    for a in range(cnt):
        s = 0.0
        for t in range(rank):
            s += v_loc[a, t] * u[t]
        m[a] = s
    # gradient
    t_coef = np.zeros(cnt)
    for p in range(n_pairs):
        margin = m[pa[p]] - m[pb[p]]
        if margin < 1.0:
            c = 2.0 * (margin - 1.0)
            t_coef[pa[p]] += c
            t_coef[pb[p]] -= c
    g = lam * u.copy()
    for a in range(cnt):
        if t_coef[a] != 0.0:
            for t in range(rank):
                g[t] += t_coef[a] * v_loc[a, t]
    gnorm2 = 0.0
    for t in range(rank):
        gnorm2 += g[t] * g[t]
    if gnorm2 == 0.0:
        return u
    # CG on H delta = g with the same scalar-accumulator trick
    delta = np.zeros(rank)
    resid = g.copy()
    pdir = g.copy()
    rs = gnorm2
    tol2 = (cg_tol * cg_tol) * gnorm2
    for _ in range(cg_max):
        bv = np.empty(cnt)
        for a in range(cnt):
            s = 0.0
            for t in range(rank):
                s += v_loc[a, t] * pdir[t]
            bv[a] = s
        q = lam * pdir.copy()
        t2 = np.zeros(cnt)
        for p in range(n_pairs):
            if m[pa[p]] - m[pb[p]] <= 1.0:
                c = 2.0 * (bv[pa[p]] - bv[pb[p]])
                t2[pa[p]] += c
                t2[pb[p]] -= c
        for a in range(cnt):
            if t2[a] != 0.0:
                for t in range(rank):
                    q[t] += t2[a] * v_loc[a, t]
        pq = 0.0
        for t in range(rank):
            pq += pdir[t] * q[t]
        if pq <= 0.0:
            if np.all(delta == 0.0):
                delta = g.copy()
            break
        alpha = rs / pq
        rs_new = 0.0
        for t in range(rank):
            delta[t] += alpha * pdir[t]
            resid[t] -= alpha * q[t]
            rs_new += resid[t] * resid[t]
        if rs_new < tol2:
            break
        beta = rs_new / rs
        for t in range(rank):
            pdir[t] = resid[t] + beta * pdir[t]
        rs = rs_new
    # backtracking line search on h(u)
    h0 = 0.0
    for t in range(rank):
        h0 += u[t] * u[t]
    h0 *= 0.5 * lam
    for p in range(n_pairs):
        margin = m[pa[p]] - m[pb[p]]
        if margin < 1.0:
            h0 += (1.0 - margin) * (1.0 - margin)
    gd = 0.0
    for t in range(rank):
        gd += g[t] * delta[t]
    step = 1.0
    u_try = np.empty(rank)
    while step > 1e-12:
        for t in range(rank):
            u_try[t] = u[t] - step * delta[t]
        h_try = 0.0
        for t in range(rank):
            h_try += u_try[t] * u_try[t]
        h_try *= 0.5 * lam
        for a in range(cnt):
            s = 0.0
            for t in range(rank):
                s += v_loc[a, t] * u_try[t]
            m[a] = s
        for p in range(n_pairs):
            margin = m[pa[p]] - m[pb[p]]
            if margin < 1.0:
                h_try += (1.0 - margin) * (1.0 - margin)
        if h_try <= h0 - ls_c1 * step * gd:
            return u_try
        step *= ls_shrink
    return u


@njit(cache=True)
def _update_users_levels(user_ptr, items, levels, user_fac, item_fac, lam,
                         cg_max, cg_tol, ls_shrink, ls_c1):
    for i in range(user_ptr.size - 1):
        lo, hi = user_ptr[i], user_ptr[i + 1]
        cnt = hi - lo
        n_pairs = 0
        for a in range(cnt):
            for b in range(cnt):
                if levels[lo + a] > levels[lo + b]:
                    n_pairs += 1
        pa = np.empty(n_pairs, dtype=np.int64)
        pb = np.empty(n_pairs, dtype=np.int64)
        p = 0
        for a in range(cnt):
            for b in range(cnt):
                if levels[lo + a] > levels[lo + b]:
                    pa[p] = a
                    pb[p] = b
                    p += 1
        v_loc = item_fac[items[lo:hi]].copy()
        user_fac[i] = _solve_user(user_fac[i].copy(), v_loc, pa, pb, lam,
                                  cg_max, cg_tol, ls_shrink, ls_c1)


@njit(cache=True)
def _update_users_pairs(item_ptr, items, pair_ptr, pa, pb, user_fac, item_fac,
                        lam, cg_max, cg_tol, ls_shrink, ls_c1):
    for i in range(item_ptr.size - 1):
        lo, hi = item_ptr[i], item_ptr[i + 1]
        plo, phi = pair_ptr[i], pair_ptr[i + 1]
        v_loc = item_fac[items[lo:hi]].copy()
        user_fac[i] = _solve_user(user_fac[i].copy(), v_loc,
                                  pa[plo:phi], pb[plo:phi], lam,
                                  cg_max, cg_tol, ls_shrink, ls_c1)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _check_state(user_fac, item_fac, data):
    if user_fac.shape[1] != item_fac.shape[1]:
        raise ConfigError("factor tables must share the rank dimension")
    if user_fac.shape[0] < data.n_users or item_fac.shape[0] < data.n_items:
        raise ConfigError("factor tables do not cover the comparison data")


def cr_objective(user_fac, item_fac, data, lam):
    """Squared-hinge ranking loss over all comparisons plus l2 on both tables."""
    _check_state(user_fac, item_fac, data)
    if isinstance(data, RatingComparisons):
        hinge = _hinge_sum_levels(data.user_ptr, data.items, data.levels,
                                  user_fac, item_fac)
    else:
        hinge = _hinge_sum_pairs(data.item_ptr, data.items, data.pair_ptr,
                                 data.pa, data.pb, user_fac, item_fac)
    return hinge + 0.5 * lam * (float(np.sum(user_fac ** 2)) + float(np.sum(item_fac ** 2)))


def grad_v_naive(user_fac, item_fac, data, lam):
    """O(pairs * r) reference gradient of the item table."""
    _check_state(user_fac, item_fac, data)
    grad = lam * item_fac.copy()
    if isinstance(data, RatingComparisons):
        _grad_naive_levels(data.user_ptr, data.items, data.levels,
                           user_fac, item_fac, grad)
    else:
        _grad_naive_pairs(data.item_ptr, data.items, data.pair_ptr, data.pa,
                          data.pb, user_fac, item_fac, grad)
    return grad


def grad_v_fast(user_fac, item_fac, data, lam):
    """O(pairs + nnz * r) gradient via per-item scalar accumulators."""
    _check_state(user_fac, item_fac, data)
    grad = lam * item_fac.copy()
    if isinstance(data, RatingComparisons):
        _grad_fast_levels(data.user_ptr, data.items, data.levels,
                          user_fac, item_fac, grad)
    else:
        _grad_fast_pairs(data.item_ptr, data.items, data.pair_ptr, data.pa,
                         data.pb, user_fac, item_fac, grad)
    return grad


def grad_v_scan_pp(user_fac, item_fac, data, lam):
    """Near-linear gradient: per user sort by score plus two Fenwick sweeps."""
    if not isinstance(data, RatingComparisons):
        raise ConfigError("the sweep kernels need rating levels, not raw pairs")
    _check_state(user_fac, item_fac, data)
    grad = lam * item_fac.copy()
    _grad_scan(data.user_ptr, data.items, data.levels, data.level_count,
               user_fac, item_fac, grad)
    return grad


def hessvec_v_fast(user_fac, item_fac, data, direction, lam):
    """Generalized Hessian of the item subproblem times a direction, pair walk."""
    _check_state(user_fac, item_fac, data)
    out = lam * direction.copy()
    if isinstance(data, RatingComparisons):
        _hessvec_fast_levels(data.user_ptr, data.items, data.levels,
                             user_fac, item_fac, direction, out)
    else:
        _hessvec_fast_pairs(data.item_ptr, data.items, data.pair_ptr, data.pa,
                            data.pb, user_fac, item_fac, direction, out)
    return out


def hessvec_v_scan_pp(user_fac, item_fac, data, direction, lam):
    """Hessian-vector product by the same sorted sweeps as the gradient."""
    if not isinstance(data, RatingComparisons):
        raise ConfigError("the sweep kernels need rating levels, not raw pairs")
    _check_state(user_fac, item_fac, data)
    out = lam * direction.copy()
    _hessvec_scan(data.user_ptr, data.items, data.levels, data.level_count,
                  user_fac, item_fac, direction, out)
    return out


def hessian_v_dense(user_fac, item_fac, data, lam):
    """Explicit (m*r x m*r) generalized Hessian; testing oracle for tiny data."""
    if isinstance(data, RatingComparisons):
        data = data.materialize()
    n_items = data.n_items
    rank = user_fac.shape[1]
    dim = n_items * rank
    hess = lam * np.eye(dim)
    for i in range(data.n_users):
        lo, hi = data.item_ptr[i], data.item_ptr[i + 1]
        its = data.items[lo:hi]
        m = item_fac[its] @ user_fac[i]
        uu = 2.0 * np.outer(user_fac[i], user_fac[i])
        for p in range(data.pair_ptr[i], data.pair_ptr[i + 1]):
            if m[data.pa[p]] - m[data.pb[p]] <= 1.0:
                j = its[data.pa[p]] * rank
                k = its[data.pb[p]] * rank
                hess[j:j + rank, j:j + rank] += uu
                hess[k:k + rank, k:k + rank] += uu
                hess[j:j + rank, k:k + rank] -= uu
                hess[k:k + rank, j:j + rank] -= uu
    return hess


def newton_update_v(user_fac, item_fac, data, hyper):
    """One truncated-Newton step on the item table.

    Conjugate gradient solves H delta = g until the residual falls below
    cg_tol times its starting norm, then a backtracking line search on the
    full objective guarantees a non-increasing step. A non-positive curvature
    direction falls back to the raw gradient.
    """
    scan = isinstance(data, RatingComparisons)
    grad_fn = grad_v_scan_pp if scan else grad_v_fast
    hess_fn = hessvec_v_scan_pp if scan else hessvec_v_fast

    g = grad_fn(user_fac, item_fac, data, hyper.lam)
    delta = np.zeros_like(g)
    resid = g.copy()
    pdir = g.copy()
    rs = float(np.vdot(resid, resid))
    if rs == 0.0:
        return item_fac, {"cg_iters": 0, "step": 0.0}
    tol2 = (hyper.cg_tol ** 2) * rs
    cg_iters = 0
    for _ in range(hyper.cg_max_iters):
        q = hess_fn(user_fac, item_fac, data, pdir, hyper.lam)
        pq = float(np.vdot(pdir, q))
        cg_iters += 1
        if pq <= 0.0:
            logger.warning("CG found non-positive curvature; falling back to gradient step")
            if not delta.any():
                delta = g.copy()
            break
        alpha = rs / pq
        delta += alpha * pdir
        resid -= alpha * q
        rs_new = float(np.vdot(resid, resid))
        if rs_new < tol2:
            break
        pdir = resid + (rs_new / rs) * pdir
        rs = rs_new

    f0 = cr_objective(user_fac, item_fac, data, hyper.lam)
    gd = float(np.vdot(g, delta))
    step = 1.0
    while step > 1e-12:
        trial = item_fac - step * delta
        if cr_objective(user_fac, trial, data, hyper.lam) <= f0 - hyper.ls_c1 * step * gd:
            return trial, {"cg_iters": cg_iters, "step": step}
        step *= hyper.ls_shrink
    logger.warning("line search made no progress; keeping item factors")
    return item_fac, {"cg_iters": cg_iters, "step": 0.0}


def update_u_ranksvm(user_fac, item_fac, data, hyper):
    """One truncated-Newton step on every user's independent subproblem."""
    _check_state(user_fac, item_fac, data)
    out = user_fac.copy()
    if isinstance(data, RatingComparisons):
        _update_users_levels(data.user_ptr, data.items, data.levels, out,
                             item_fac, hyper.lam, hyper.cg_max_iters,
                             hyper.cg_tol, hyper.ls_shrink, hyper.ls_c1)
    else:
        _update_users_pairs(data.item_ptr, data.items, data.pair_ptr, data.pa,
                            data.pb, out, item_fac, hyper.lam,
                            hyper.cg_max_iters, hyper.cg_tol, hyper.ls_shrink,
                            hyper.ls_c1)
    return out


def train_primal_cr(train, hyper, variant="cr++", eval_data=None):
    """Alternating truncated-Newton trainer.

    variant "cr" walks materialized comparisons; "cr++" keeps them implicit
    and uses the sorted-sweep kernels. Both run the identical optimization,
    so with one seed they produce the same iterates up to floating-point
    reassociation. Per-epoch objective (and ranking quality on eval_data,
    when given) goes to the training log.
    """
    from . import metrics as _metrics

    hyper.validate()
    if variant not in ("cr", "cr++"):
        raise ConfigError(f"unknown variant {variant!r}")
    if isinstance(train, RatingsMatrix):
        data = RatingComparisons.from_matrix(train)
    else:
        data = train
    if variant == "cr" and isinstance(data, RatingComparisons):
        data = data.materialize()

    rng = np.random.default_rng([hyper.seed, 0])
    item_fac = rng.standard_normal((data.n_items, hyper.rank)) / np.sqrt(hyper.rank)
    user_fac = rng.standard_normal((data.n_users, hyper.rank)) / np.sqrt(hyper.rank)

    log_rows = []
    prev = np.inf
    for epoch in range(hyper.outer_iters):
        item_fac, _ = newton_update_v(user_fac, item_fac, data, hyper)
        user_fac = update_u_ranksvm(user_fac, item_fac, data, hyper)
        obj = cr_objective(user_fac, item_fac, data, hyper.lam)
        if not np.isfinite(obj):
            raise TrainingError(f"objective diverged to {obj}", epoch=epoch)
        row = {"epoch": epoch, "objective": obj}
        if eval_data is not None:
            snapshot = FactorModel(user_fac, item_fac, mode="primal-" + variant)
            row["ndcg10"] = _metrics.ndcg_at_k(snapshot, eval_data, 10)
            row["pairwise_error"] = _metrics.pairwise_error(snapshot, eval_data)
        log_rows.append(row)
        if prev < np.inf and prev > 0 and (prev - obj) / prev < hyper.rel_tol:
            break
        prev = obj
    mode = "primal-crpp" if variant == "cr++" else "primal-cr"
    return FactorModel(user_fac, item_fac, mode=mode,
                       meta={"hyper": hyper, "log": log_rows})
