"""Timing harness for the complexity claims: kernel scaling and encoding cost."""

from __future__ import annotations

import time

import numpy as np

from . import pairwise
from .bloom import dna_encode
from .data import RatingsMatrix
from .errors import ConfigError
from .graphs import erdos_renyi


def synth_level_ratings(n_users, per_user, n_items, n_levels=5, seed=0):
    """Every user rates `per_user` random items with uniform levels 1..n_levels."""
    if per_user > n_items:
        raise ConfigError("per_user cannot exceed n_items")
    rng = np.random.default_rng(seed)
    users = np.repeat(np.arange(n_users, dtype=np.int64), per_user)
    items = np.empty(n_users * per_user, dtype=np.int64)
    for i in range(n_users):
        items[i * per_user:(i + 1) * per_user] = rng.choice(n_items, size=per_user,
                                                            replace=False)
    ratings = rng.integers(1, n_levels + 1, size=users.size).astype(np.float64)
    return RatingsMatrix(n_users, n_items, users, items, ratings)


def _time(fn, repeats):
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    arr = np.array(best)
    return float(arr.mean()), float(arr.std())


def warmup_kernels():
    """Trigger jit compilation so timings measure the algorithms only."""
    matrix = synth_level_ratings(4, 6, 12, n_levels=3, seed=0)
    data = pairwise.RatingComparisons.from_matrix(matrix)
    rng = np.random.default_rng(0)
    user_fac = rng.standard_normal((4, 4))
    item_fac = rng.standard_normal((12, 4))
    pairwise.grad_v_naive(user_fac, item_fac, data, 0.1)
    pairwise.grad_v_fast(user_fac, item_fac, data, 0.1)
    pairwise.grad_v_scan_pp(user_fac, item_fac, data, 0.1)
    pairwise.hessvec_v_fast(user_fac, item_fac, data, item_fac, 0.1)
    pairwise.hessvec_v_scan_pp(user_fac, item_fac, data, item_fac, 0.1)
    pairwise.cr_objective(user_fac, item_fac, data, 0.1)
    pairwise.update_u_ranksvm(user_fac, item_fac, data,
                              pairwise.CrHyper(rank=4, lam=0.1))


def bench_gradient_kernels(n_users=2000, per_user_grid=(50, 100, 200, 400),
                           rank=32, n_levels=5, n_items=None, repeats=3, seed=0,
                           kernels=("naive", "fast", "scan")):
    """Time one item-gradient evaluation per kernel over a per-user-count grid.

    Returns rows of (kernel, per_user, total_ratings, mean_s, std_s).
    """
    warmup_kernels()
    if n_items is None:
        n_items = max(per_user_grid) * 5
    rng = np.random.default_rng(seed)
    rows = []
    for per_user in per_user_grid:
        matrix = synth_level_ratings(n_users, per_user, n_items, n_levels, seed)
        data = pairwise.RatingComparisons.from_matrix(matrix)
        user_fac = rng.standard_normal((n_users, rank)) / np.sqrt(rank)
        item_fac = rng.standard_normal((n_items, rank)) / np.sqrt(rank)
        fns = {
            "naive": lambda: pairwise.grad_v_naive(user_fac, item_fac, data, 0.1),
            "fast": lambda: pairwise.grad_v_fast(user_fac, item_fac, data, 0.1),
            "scan": lambda: pairwise.grad_v_scan_pp(user_fac, item_fac, data, 0.1),
        }
        for kernel in kernels:
            mean, std = _time(fns[kernel], repeats)
            rows.append({"kernel": kernel, "per_user": per_user,
                         "ratings": n_users * per_user, "mean_s": mean, "std_s": std})
    return rows


def loglog_slope(xs, ys):
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)),
                            np.log(np.asarray(ys, dtype=float)), 1)[0])


def kernel_slopes(rows):
    """Fit one log-log slope of time vs total ratings per kernel."""
    slopes = {}
    for kernel in sorted({r["kernel"] for r in rows}):
        sub = [r for r in rows if r["kernel"] == kernel]
        slopes[kernel] = loglog_slope([r["ratings"] for r in sub],
                                      [r["mean_s"] for r in sub])
    return slopes


def bench_encoding(n=2000, edge_prob=0.005, depth_grid=(1, 2, 3, 4), c=256, k=3,
                   repeats=3, seed=0):
    """Time the neighborhood encoding as depth grows (should scale linearly)."""
    rng = np.random.default_rng(seed)
    graph = erdos_renyi(n, edge_prob, rng)
    rows = []
    for depth in depth_grid:
        mean, std = _time(lambda: dna_encode(graph, c, k, depth, seed=seed), repeats)
        rows.append({"depth": depth, "nodes": n, "edges": graph.edge_count,
                     "mean_s": mean, "std_s": std})
    return rows


def write_bench_table(rows, path, slopes=None):
    """Tab-separated timing table; slope fits go into trailing comment lines."""
    if not rows:
        raise ConfigError("no benchmark rows to write")
    cols = list(rows[0].keys())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(row[c]) for c in cols) + "\n")
        if slopes:
            for name, slope in slopes.items():
                fh.write(f"# slope {name} {slope!r}\n")


def _fmt(x):
    if isinstance(x, float):
        return repr(float(x))
    return str(x)
