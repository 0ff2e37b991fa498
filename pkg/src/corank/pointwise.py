"""Pointwise matrix factorization family.

Four trainers share one SGD engine: plain MF, graph-regularized MF (the
Laplacian penalty can run over the raw side graph or its pseudo-node
augmentation), graph-regularized weighted MF for implicit 0/1 data, and
co-factorization sharing user factors with a side matrix. Objectives and
analytic gradients are exposed separately so they can be checked against
dense brute force and finite differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data import CONTINUOUS, IMPLICIT, RatingsMatrix
from .errors import ConfigError, MetricError, TrainingError
from .factors import FactorModel

logger = logging.getLogger(__name__)

SAMPLE_RATING = 0
SAMPLE_EDGE = 1
SAMPLE_SIDE = 2


@dataclass
class HyperParams:
    """Shared knobs of the pointwise trainers."""

    rank: int = 10
    lam: float = 0.1
    mu: float = 0.0
    rho_zero: float = 0.01
    step_size: float = 0.02
    decay: float = 0.97
    epochs: int = 40
    seed: int = 0

    def validate(self):
        if self.lam < 0 or self.mu < 0:
            raise ConfigError("lam and mu must be >= 0")
        if not 0 < self.rho_zero < 1:
            raise ConfigError("rho_zero must be in (0, 1)")
        if self.rank < 1 or self.epochs < 1:
            raise ConfigError("rank and epochs must be >= 1")


# Default sweep grid for the l2 and graph weights.
DEFAULT_LAMBDA_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
DEFAULT_MU_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)


def _check_dims(matrix, user_fac, item_fac, graph=None):
    if user_fac.shape[1] != item_fac.shape[1]:
        raise ConfigError("factor tables must share the rank dimension")
    if matrix.n_users > user_fac.shape[0] or matrix.n_items != item_fac.shape[0]:
        raise ConfigError("factor tables do not cover the rating matrix")
    if graph is not None and graph.n != user_fac.shape[0]:
        raise ConfigError("graph node count must match the user factor rows")


def laplacian_term(user_fac, graph):
    """trace(U^T Lap(G) U) = sum over undirected edges of w * ||u_a - u_b||^2."""
    lap = graph.laplacian()
    return float(np.sum(user_fac * (lap @ user_fac)))


def grmf_objective(matrix, user_fac, item_fac, graph, lam, mu):
    """Squared loss on observed entries + l2 + graph-Laplacian smoothness."""
    _check_dims(matrix, user_fac, item_fac, graph if mu else None)
    users, items, ratings = matrix.triples()
    preds = np.einsum("ij,ij->i", user_fac[users], item_fac[items])
    data = float(np.sum((ratings - preds) ** 2))
    reg = 0.5 * lam * (np.sum(user_fac ** 2) + np.sum(item_fac ** 2))
    graph_term = mu * laplacian_term(user_fac, graph) if mu and graph is not None else 0.0
    return data + reg + graph_term


def mf_objective(matrix, user_fac, item_fac, lam):
    return grmf_objective(matrix, user_fac, item_fac, None, lam, 0.0)


def grmf_gradient(matrix, user_fac, item_fac, graph, lam, mu):
    """Analytic gradient of grmf_objective in (U, V)."""
    _check_dims(matrix, user_fac, item_fac, graph if mu else None)
    users, items, ratings = matrix.triples()
    preds = np.einsum("ij,ij->i", user_fac[users], item_fac[items])
    resid = preds - ratings
    grad_u = lam * user_fac.copy()
    grad_v = lam * item_fac.copy()
    np.add.at(grad_u, users, 2.0 * resid[:, None] * item_fac[items])
    np.add.at(grad_v, items, 2.0 * resid[:, None] * user_fac[users])
    if mu and graph is not None:
        grad_u += 2.0 * mu * (graph.laplacian() @ user_fac)
    return grad_u, grad_v


def grwmf_objective(matrix, user_fac, item_fac, graph, lam, mu, rho):
    """Weighted implicit objective with the Gram shortcut for the zero half.

    Observed 1s pay (1 - u.v)^2; every other cell of the full matrix pays
    rho * (u.v)^2. The sum of squared scores over all n*m cells is evaluated
    as sum_i u_i^T (V^T V) u_i instead of materializing the dense product.
    """
    if matrix.mode != IMPLICIT:
        raise ConfigError("grwmf objective requires an implicit matrix")
    _check_dims(matrix, user_fac, item_fac, graph if mu else None)
    users, items, _ = matrix.triples()
    pos = np.einsum("ij,ij->i", user_fac[users], item_fac[items])
    gram = item_fac.T @ item_fac
    rows = user_fac[:matrix.n_users]
    all_sq = float(np.sum((rows @ gram) * rows))
    data = float(np.sum((1.0 - pos) ** 2)) + rho * (all_sq - float(np.sum(pos ** 2)))
    reg = 0.5 * lam * (np.sum(user_fac ** 2) + np.sum(item_fac ** 2))
    graph_term = mu * laplacian_term(user_fac, graph) if mu and graph is not None else 0.0
    return data + reg + graph_term


def grwmf_objective_dense(matrix, user_fac, item_fac, graph, lam, mu, rho):
    """Brute-force reference that materializes the full score matrix."""
    if matrix.mode != IMPLICIT:
        raise ConfigError("grwmf objective requires an implicit matrix")
    scores = user_fac[:matrix.n_users] @ item_fac.T
    mask = np.zeros((matrix.n_users, matrix.n_items), dtype=bool)
    users, items, _ = matrix.triples()
    mask[users, items] = True
    data = float(np.sum((1.0 - scores[mask]) ** 2)) + rho * float(np.sum(scores[~mask] ** 2))
    reg = 0.5 * lam * (np.sum(user_fac ** 2) + np.sum(item_fac ** 2))
    graph_term = mu * laplacian_term(user_fac, graph) if mu and graph is not None else 0.0
    return data + reg + graph_term


def grwmf_gradient(matrix, user_fac, item_fac, graph, lam, mu, rho):
    users, items, _ = matrix.triples()
    pos = np.einsum("ij,ij->i", user_fac[users], item_fac[items])
    # Positive cells: (1-s)^2 counts once, and their rho * s^2 share of the
    # all-cells term is subtracted back out.
    coef = -2.0 * (1.0 - pos) - 2.0 * rho * pos
    grad_u = lam * user_fac.copy()
    grad_v = lam * item_fac.copy()
    np.add.at(grad_u, users, coef[:, None] * item_fac[items])
    np.add.at(grad_v, items, coef[:, None] * user_fac[users])
    gram_v = item_fac.T @ item_fac
    rows = user_fac[:matrix.n_users]
    grad_u[:matrix.n_users] += 2.0 * rho * (rows @ gram_v)
    grad_v += 2.0 * rho * (item_fac @ (rows.T @ rows))
    if mu and graph is not None:
        grad_u += 2.0 * mu * (graph.laplacian() @ user_fac)
    return grad_u, grad_v


def cofactor_objective(matrix, side, user_fac, item_fac, side_fac, lam):
    """Rating loss plus a second squared loss tying user factors to the side matrix."""
    _check_dims(matrix, user_fac, item_fac)
    users, items, ratings = matrix.triples()
    preds = np.einsum("ij,ij->i", user_fac[users], item_fac[items])
    data = float(np.sum((ratings - preds) ** 2))
    side_term = 0.0
    if side is not None and side.nnz:
        su, sj, sv = side.triples()
        spred = np.einsum("ij,ij->i", user_fac[su], side_fac[sj])
        side_term = float(np.sum((sv - spred) ** 2))
    reg = 0.5 * lam * (np.sum(user_fac ** 2) + np.sum(item_fac ** 2)
                       + (np.sum(side_fac ** 2) if side_fac is not None else 0.0))
    return data + side_term + reg


def cofactor_gradient(matrix, side, user_fac, item_fac, side_fac, lam):
    users, items, ratings = matrix.triples()
    resid = np.einsum("ij,ij->i", user_fac[users], item_fac[items]) - ratings
    grad_u = lam * user_fac.copy()
    grad_v = lam * item_fac.copy()
    grad_p = lam * side_fac.copy()
    np.add.at(grad_u, users, 2.0 * resid[:, None] * item_fac[items])
    np.add.at(grad_v, items, 2.0 * resid[:, None] * user_fac[users])
    if side is not None and side.nnz:
        su, sj, sv = side.triples()
        sres = np.einsum("ij,ij->i", user_fac[su], side_fac[sj]) - sv
        np.add.at(grad_u, su, 2.0 * sres[:, None] * side_fac[sj])
        np.add.at(grad_p, sj, 2.0 * sres[:, None] * user_fac[su])
    return grad_u, grad_v, grad_p


def graph_as_ratings(graph):
    """Adjacency nonzeros of an n-node graph viewed as an n x n rating matrix."""
    src = np.repeat(np.arange(graph.n, dtype=np.int64), np.diff(graph.ptr))
    return RatingsMatrix(graph.n, graph.n, src, graph.nbr.astype(np.int64),
                         graph.wgt, mode=CONTINUOUS)


def rgg(rmse_no_graph, rmse_with_graph, rmse_with_x):
    """Relative graph gain: percentage improvement of X over first-order graph info.

    ((no_graph - with_x) / (no_graph - with_graph) - 1) * 100; zero when X does
    exactly as well as the raw graph. Undefined unless the raw graph improved
    on the graphless baseline.
    """
    denom = rmse_no_graph - rmse_with_graph
    if denom <= 0:
        raise MetricError("relative graph gain undefined: graph run did not improve on baseline")
    return ((rmse_no_graph - rmse_with_x) / denom - 1.0) * 100.0


@njit(cache=True)
def _sgd_epoch(kind, aidx, bidx, val, order, user_fac, item_fac, side_fac,
               reg_u, reg_v, reg_p, eta, lam, mu):
    rank = user_fac.shape[1]
    for s in range(order.size):
        t = order[s]
        a = aidx[t]
        b = bidx[t]
        if kind[t] == SAMPLE_RATING:
            pred = 0.0
            for q in range(rank):
                pred += user_fac[a, q] * item_fac[b, q]
            err = val[t] - pred
            for q in range(rank):
                ua = user_fac[a, q]
                user_fac[a, q] += eta * (2.0 * err * item_fac[b, q] - lam * reg_u[a] * ua)
                item_fac[b, q] += eta * (2.0 * err * ua - lam * reg_v[b] * item_fac[b, q])
        elif kind[t] == SAMPLE_EDGE:
            w = 2.0 * mu * val[t]
            for q in range(rank):
                diff = user_fac[a, q] - user_fac[b, q]
                user_fac[a, q] -= eta * w * diff
                user_fac[b, q] += eta * w * diff
        else:
            pred = 0.0
            for q in range(rank):
                pred += user_fac[a, q] * side_fac[b, q]
            err = val[t] - pred
            for q in range(rank):
                ua = user_fac[a, q]
                user_fac[a, q] += eta * (2.0 * err * side_fac[b, q] - lam * reg_u[a] * ua)
                side_fac[b, q] += eta * (2.0 * err * ua - lam * reg_p[b] * side_fac[b, q])


def _init_factors(rng, n_rows, n_items, rank, n_side=0):
    # Item factors first so that shared rows match across graph variants that
    # only differ in the number of user-side rows.
    item_fac = rng.standard_normal((n_items, rank)) / np.sqrt(rank)
    user_fac = rng.standard_normal((n_rows, rank)) / np.sqrt(rank)
    side_fac = rng.standard_normal((n_side, rank)) / np.sqrt(rank) if n_side else \
        np.zeros((1, rank))
    return user_fac, item_fac, side_fac


def _inverse_counts(idx, size):
    counts = np.bincount(idx, minlength=size).astype(np.float64)
    out = np.zeros(size, dtype=np.float64)
    nz = counts > 0
    out[nz] = 1.0 / counts[nz]
    return out


def _run_sgd(matrix, graph, side, hyper, mode, objective_fn):
    """Shared SGD loop: one shuffled pass per epoch over ratings, graph edges,
    and side entries together, with multiplicative step decay."""
    hyper.validate()
    rng_init = np.random.default_rng([hyper.seed, 0])
    rng_order = np.random.default_rng([hyper.seed, 1])

    users, items, ratings = matrix.triples()
    kinds = [np.zeros(users.size, dtype=np.int8)]
    aidx = [users]
    bidx = [items]
    vals = [ratings]
    n_rows = graph.n if graph is not None else matrix.n_users
    if graph is not None and hyper.mu > 0:
        ea, eb, ew = graph.edge_arrays()
        kinds.append(np.full(ea.size, SAMPLE_EDGE, dtype=np.int8))
        aidx.append(ea)
        bidx.append(eb)
        vals.append(ew)
    n_side = 0
    if side is not None:
        su, sj, sv = side.triples()
        n_side = side.n_items
        kinds.append(np.full(su.size, SAMPLE_SIDE, dtype=np.int8))
        aidx.append(su)
        bidx.append(sj)
        vals.append(sv)
    kind = np.concatenate(kinds)
    aidx = np.concatenate(aidx)
    bidx = np.concatenate(bidx)
    val = np.concatenate(vals)

    user_fac, item_fac, side_fac = _init_factors(
        rng_init, n_rows, matrix.n_items, hyper.rank, n_side)
    reg_u = _inverse_counts(
        np.concatenate([users] + ([su] if n_side else [])), n_rows)
    reg_v = _inverse_counts(items, matrix.n_items)
    reg_p = _inverse_counts(sj, n_side) if n_side else np.zeros(1)

    eta = hyper.step_size
    log_rows = []
    best = np.inf
    for epoch in range(hyper.epochs):
        order = rng_order.permutation(kind.size)
        _sgd_epoch(kind, aidx, bidx, val, order, user_fac, item_fac, side_fac,
                   reg_u, reg_v, reg_p, eta, hyper.lam, hyper.mu)
        eta *= hyper.decay
        obj = objective_fn(user_fac, item_fac, side_fac)
        if not np.isfinite(obj):
            raise TrainingError(f"objective diverged to {obj}", epoch=epoch)
        best = min(best, obj)
        log_rows.append({"epoch": epoch, "objective": obj,
                         "rmse": _train_rmse(matrix, user_fac, item_fac)})
    model = FactorModel(user_fac[:matrix.n_users].copy(), item_fac, mode=mode,
                        side_factors=side_fac.copy() if n_side else None,
                        meta={"hyper": hyper, "log": log_rows, "best_objective": best})
    return model


def _train_rmse(matrix, user_fac, item_fac):
    users, items, ratings = matrix.triples()
    preds = np.einsum("ij,ij->i", user_fac[users], item_fac[items])
    return float(np.sqrt(np.mean((ratings - preds) ** 2))) if ratings.size else 0.0


def mf_train(matrix, hyper):
    """Plain l2-regularized matrix factorization; baseline for every comparison."""
    return _run_sgd(matrix, None, None, hyper, "mf",
                    lambda u, v, p: mf_objective(matrix, u, v, hyper.lam))


def grmf_train(matrix, graph, hyper):
    """Graph-regularized MF over a raw or pseudo-node-augmented graph.

    When the graph has more nodes than there are users, the extra rows are
    treated as pseudo-nodes: they join the Laplacian term during training and
    are dropped from the returned model.
    """
    if graph is not None and graph.n < matrix.n_users:
        raise ConfigError("graph must cover all users")
    if hyper.mu == 0 or graph is None:
        return _run_sgd(matrix, graph, None, hyper, "grmf",
                        lambda u, v, p: grmf_objective(matrix, u, v, None, hyper.lam, 0.0))
    return _run_sgd(matrix, graph, None, hyper, "grmf",
                    lambda u, v, p: grmf_objective(matrix, u, v, graph, hyper.lam, hyper.mu))


def grwmf_train(matrix, graph, hyper):
    """Weighted implicit MF by full-batch gradient descent with step decay.

    The rho-weighted zero term couples every (user, item) cell, so the epoch
    gradient is computed through the Gram identity instead of sampling.
    """
    hyper.validate()
    if matrix.mode != IMPLICIT:
        raise ConfigError("grwmf_train requires an implicit matrix")
    if graph is not None and graph.n < matrix.n_users:
        raise ConfigError("graph must cover all users")
    rng_init = np.random.default_rng([hyper.seed, 0])
    n_rows = graph.n if graph is not None and hyper.mu > 0 else matrix.n_users
    use_graph = graph if hyper.mu > 0 else None
    user_fac, item_fac, _ = _init_factors(rng_init, n_rows, matrix.n_items, hyper.rank)
    eta = hyper.step_size
    log_rows = []
    best = np.inf
    for epoch in range(hyper.epochs):
        gu, gv = grwmf_gradient(matrix, user_fac, item_fac, use_graph,
                                hyper.lam, hyper.mu, hyper.rho_zero)
        user_fac -= eta * gu
        item_fac -= eta * gv
        eta *= hyper.decay
        obj = grwmf_objective(matrix, user_fac, item_fac, use_graph,
                              hyper.lam, hyper.mu, hyper.rho_zero)
        if not np.isfinite(obj):
            raise TrainingError(f"objective diverged to {obj}", epoch=epoch)
        best = min(best, obj)
        log_rows.append({"epoch": epoch, "objective": obj})
    return FactorModel(user_fac[:matrix.n_users].copy(), item_fac, mode="grwmf",
                       meta={"hyper": hyper, "log": log_rows, "best_objective": best})


def cofactor_train(matrix, side, hyper):
    """Co-factorization: SGD over the union of rating and side-matrix entries.

    side is a RatingsMatrix: the raw adjacency via graph_as_ratings, or the
    sketch bit matrix via bloom.bipartite_view. An empty side matrix reduces
    to plain MF with shared randomness.
    """
    if side is not None and side.n_users != matrix.n_users:
        raise ConfigError("side matrix must have one row per user")
    if side is not None and side.nnz == 0:
        side = None
    return _run_sgd(
        matrix, None, side, hyper, "cofactor",
        lambda u, v, p: cofactor_objective(matrix, side, u, v,
                                           p if side is not None else None, hyper.lam))
