"""Listwise collaborative ranking from sequential-draw permutation likelihoods.

A ranked list is scored by the probability of drawing its items one by one,
each with probability proportional to phi(score). We take log phi to be the
sigmoid, which keeps every weight inside (1, e) so the likelihood never
overflows regardless of score magnitude. Ties and missing data are handled by
re-drawing a uniformly random tie-breaking order each epoch, and implicit
feedback appends sampled unobserved items to the back of each user's list.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import IMPLICIT
from .errors import ConfigError, TrainingError
from .factors import FactorModel

logger = logging.getLogger(__name__)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ListHyper:
    """Knobs of the listwise SGD trainer."""

    rank: int = 10
    lam: float = 0.1
    top_k: int | None = None  # None ranks the full list
    rho_neg: float = 3.0
    step_size: float = 0.1
    decay: float = 0.95
    epochs: int = 50
    seed: int = 0

    def validate(self):
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.rho_neg < 0:
            raise ConfigError("rho_neg must be >= 0")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")


@dataclass
class PermutationBatch:
    """One drawn ranking per user: best first, negatives (if any) at the back."""

    sequences: list  # per-user int64 arrays
    pos_counts: np.ndarray  # observed entries per user (before negatives)
    includes_negatives: bool
    seed: object = None
    meta: dict = field(default_factory=dict)


def perm_prob(scores, pi, k=None):
    """Probability of drawing the ranking pi from the given scores.

    Items are drawn without replacement with weight phi(score); the result is
    the product over the first min(k, len(pi)) draws, evaluated in log space.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.int64)
    if pi.size and (pi.min() < 0 or pi.max() >= scores.size):
        raise ConfigError("permutation index out of range")
    if np.unique(pi).size != pi.size:
        raise ConfigError("permutation contains a repeated index")
    length = pi.size
    k = length if k is None else min(k, length)
    logphi = sigmoid(scores[pi])
    phi = np.exp(logphi)
    denom = np.cumsum(phi[::-1])[::-1]
    logp = float(np.sum(logphi[:k] - np.log(denom[:k])))
    return math.exp(logp)


def stochastic_queuing(matrix, user, rho_neg=0.0, mode="explicit", rng=None, seed=None):
    """Draw one ranked item sequence for a user.

    Observed items are sorted by rating descending with ties shuffled
    uniformly. In implicit mode, round(rho_neg * positives) items sampled
    without replacement from the user's never-observed items are appended to
    the back; if fewer are available, all of them are used (logged).
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    items, ratings = matrix.user_row(user)
    if items.size == 0:
        raise ConfigError(f"user {user} has no observed entries")
    shuffle = rng.permutation(items.size)
    # Stable sort of a shuffled order makes every tie order equally likely.
    order = shuffle[np.argsort(-ratings[shuffle], kind="stable")]
    seq = items[order]
    if mode != IMPLICIT:
        return seq
    n_neg = int(round(rho_neg * items.size))
    if n_neg == 0:
        return seq
    blocked = np.concatenate([items, matrix.user_zero_row(user)])
    pool = np.setdiff1d(np.arange(matrix.n_items, dtype=np.int64), blocked)
    if pool.size < n_neg:
        logger.warning("user %d: only %d unobserved items for %d negatives",
                       user, pool.size, n_neg)
        n_neg = pool.size
    negatives = rng.choice(pool, size=n_neg, replace=False)
    return np.concatenate([seq, negatives])


def draw_batch(matrix, rho_neg, mode, seed, epoch=0):
    """Fresh tie-breaking rankings for every user with at least one observation.

    Randomness is split per (seed, epoch, user) so batches are reproducible
    and independent across epochs.
    """
    sequences = []
    pos_counts = np.zeros(matrix.n_users, dtype=np.int64)
    for i in range(matrix.n_users):
        items, _ = matrix.user_row(i)
        pos_counts[i] = items.size
        if items.size == 0:
            sequences.append(np.empty(0, dtype=np.int64))
            continue
        rng = np.random.default_rng([seed, epoch, i])
        sequences.append(stochastic_queuing(matrix, i, rho_neg, mode, rng=rng))
    return PermutationBatch(sequences, pos_counts,
                            includes_negatives=(mode == IMPLICIT and rho_neg > 0),
                            seed=(seed, epoch))


def _position_coefficients(scores, k):
    """d(list loss)/d(score at each position) for one user's drawn list."""
    length = scores.size
    k = length if k is None else min(k, length)
    sig = sigmoid(scores)
    dsig = sig * (1.0 - sig)
    phi = np.exp(sig)
    denom = np.cumsum(phi[::-1])[::-1]        # D_j = sum_{l >= j} phi_l
    inv_prefix = np.cumsum(1.0 / denom[:k])   # sum_{j <= p, j <= k} 1/D_j
    pre = np.empty(length)
    pre[:k] = inv_prefix
    pre[k:] = inv_prefix[k - 1] if k else 0.0
    coef = phi * dsig * pre
    coef[:k] -= dsig[:k]
    return coef


def sql_objective(user_fac, item_fac, batch, lam, k=None):
    """Negative log-likelihood of the drawn rankings plus l2 regularization."""
    total = 0.0
    for i, seq in enumerate(batch.sequences):
        if seq.size == 0:
            continue
        scores = item_fac[seq] @ user_fac[i]
        length = seq.size
        kk = length if k is None else min(k, length)
        sig = sigmoid(scores)
        phi = np.exp(sig)
        denom = np.cumsum(phi[::-1])[::-1]
        total -= float(np.sum(sig[:kk] - np.log(denom[:kk])))
    total += 0.5 * lam * (float(np.sum(user_fac ** 2)) + float(np.sum(item_fac ** 2)))
    return total


def grad_v_listwise(user_fac, item_fac, batch, lam, k=None):
    """Item-table gradient in O(total list length * rank) via suffix sums."""
    grad = lam * item_fac.copy()
    for i, seq in enumerate(batch.sequences):
        if seq.size == 0:
            continue
        scores = item_fac[seq] @ user_fac[i]
        coef = _position_coefficients(scores, k)
        np.add.at(grad, seq, coef[:, None] * user_fac[i][None, :])
    return grad


def grad_u_listwise(user_fac, item_fac, batch, lam, k=None):
    grad = lam * user_fac.copy()
    for i, seq in enumerate(batch.sequences):
        if seq.size == 0:
            continue
        scores = item_fac[seq] @ user_fac[i]
        coef = _position_coefficients(scores, k)
        grad[i] += coef @ item_fac[seq]
    return grad


def grad_v_listwise_naive(user_fac, item_fac, batch, lam, k=None):
    """O(list length squared) reference: differentiate each draw term directly."""
    grad = lam * item_fac.copy()
    for i, seq in enumerate(batch.sequences):
        if seq.size == 0:
            continue
        scores = item_fac[seq] @ user_fac[i]
        length = seq.size
        kk = length if k is None else min(k, length)
        sig = sigmoid(scores)
        dsig = sig * (1.0 - sig)
        phi = np.exp(sig)
        for j in range(kk):
            denom = float(np.sum(phi[j:]))
            grad[seq[j]] -= dsig[j] * user_fac[i]
            for l in range(j, length):
                grad[seq[l]] += (phi[l] * dsig[l] / denom) * user_fac[i]
    return grad


def train_sql_rank(train, hyper, mode="explicit", eval_train=None, eval_test=None,
                   use_queuing=True):
    """Listwise SGD: draw rankings, step the user table, then the item table.

    A fresh batch is drawn every epoch (different tie orders and, in implicit
    mode, different sampled zeros); use_queuing=False freezes the first batch
    for ablation. The step size shrinks multiplicatively after each of the
    two half-steps.
    """
    from . import metrics as _metrics

    hyper.validate()
    if mode == IMPLICIT and train.mode != IMPLICIT:
        raise ConfigError("implicit training requires an implicit matrix")
    rng = np.random.default_rng([hyper.seed, 0])
    item_fac = rng.standard_normal((train.n_items, hyper.rank)) / np.sqrt(hyper.rank)
    user_fac = rng.standard_normal((train.n_users, hyper.rank)) / np.sqrt(hyper.rank)
    rho = hyper.rho_neg if mode == IMPLICIT else 0.0

    step = hyper.step_size
    log_rows = []
    frozen = None
    for epoch in range(hyper.epochs):
        if frozen is None or use_queuing:
            batch = draw_batch(train, rho, mode, hyper.seed, epoch=epoch)
            if not use_queuing:
                frozen = batch
        else:
            batch = frozen
        user_fac -= step * grad_u_listwise(user_fac, item_fac, batch, hyper.lam, hyper.top_k)
        step *= hyper.decay
        item_fac -= step * grad_v_listwise(user_fac, item_fac, batch, hyper.lam, hyper.top_k)
        step *= hyper.decay
        obj = sql_objective(user_fac, item_fac, batch, hyper.lam, hyper.top_k)
        if not np.isfinite(obj):
            raise TrainingError(f"objective diverged to {obj}", epoch=epoch)
        row = {"epoch": epoch, "objective": obj}
        if eval_test is not None:
            snapshot = FactorModel(user_fac, item_fac, mode="sql-rank")
            row["precision1"] = _metrics.precision_at_k_implicit(
                snapshot, eval_train if eval_train is not None else train, eval_test, 1) \
                if mode == IMPLICIT else _metrics.precision_at_k_explicit(
                    snapshot, eval_train if eval_train is not None else train, eval_test, 1)
        log_rows.append(row)
    return FactorModel(user_fac, item_fac, mode="sql-rank",
                       meta={"hyper": hyper, "log": log_rows})
