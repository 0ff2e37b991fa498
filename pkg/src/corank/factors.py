"""Latent factor model container and its text persistence format."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError


@dataclass
class FactorModel:
    """Rank-r factor tables; the score of (user i, item j) is U[i] . V[j].

    side_factors holds the co-factorization side table when present. meta
    carries hyperparameters and training summary and is not persisted.
    """

    user_factors: np.ndarray
    item_factors: np.ndarray
    mode: str = "mf"
    side_factors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_users(self):
        return self.user_factors.shape[0]

    @property
    def n_items(self):
        return self.item_factors.shape[0]

    @property
    def rank(self):
        return self.user_factors.shape[1]

    def predict(self, users, items):
        """Scores for parallel index arrays."""
        return np.einsum("ij,ij->i", self.user_factors[users], self.item_factors[items])

    def user_scores(self, i):
        """Scores of every item for user i."""
        return self.item_factors @ self.user_factors[i]

    def score_matrix(self):
        return self.user_factors @ self.item_factors.T


def _write_rows(fh, table):
    for row in table:
        fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def _read_rows(fh, count, rank, line_no):
    out = np.empty((count, rank), dtype=np.float64)
    for i in range(count):
        parts = fh.readline().split()
        if len(parts) != rank:
            raise ParseError(f"expected {rank} floats", line_no + i)
        out[i] = [float(p) for p in parts]
    return out


def save_model(model, path):
    """Write the CF-MODEL v1 text format; floats keep full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("CF-MODEL v1\n")
        fh.write(f"mode {model.mode}\n")
        fh.write(f"n {model.n_users} m {model.n_items} r {model.rank}\n")
        fh.write("U\n")
        _write_rows(fh, model.user_factors)
        fh.write("V\n")
        _write_rows(fh, model.item_factors)
        if model.side_factors is not None:
            fh.write(f"VPRIME {model.side_factors.shape[0]}\n")
            _write_rows(fh, model.side_factors)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        if fh.readline().strip() != "CF-MODEL v1":
            raise ParseError("not a CF-MODEL v1 file", 1)
        mode = fh.readline().split(maxsplit=1)[1].strip()
        dims = fh.readline().split()
        n, m, r = int(dims[1]), int(dims[3]), int(dims[5])
        if fh.readline().strip() != "U":
            raise ParseError("expected U section", 4)
        user_factors = _read_rows(fh, n, r, 5)
        if fh.readline().strip() != "V":
            raise ParseError("expected V section", 5 + n)
        item_factors = _read_rows(fh, m, r, 6 + n)
        side_factors = None
        tail = fh.readline().split()
        if tail and tail[0] == "VPRIME":
            side_factors = _read_rows(fh, int(tail[1]), r, 7 + n + m)
    return FactorModel(user_factors, item_factors, mode=mode, side_factors=side_factors)


def save_training_log(rows, path):
    """Per-epoch tab-separated log; the first row's keys fix the columns."""
    if not rows:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch\n")
        return
    cols = list(rows[0].keys())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(row.get(c)) for c in cols) + "\n")


def _fmt(x):
    if x is None:
        return "nan"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def load_training_log(path):
    with open(path, "r", encoding="utf-8") as fh:
        cols = fh.readline().rstrip("\n").split("\t")
        rows = []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            row = {}
            for c, p in zip(cols, parts):
                row[c] = int(p) if c == "epoch" else float(p)
            rows.append(row)
    return rows
