"""Undirected graphs with per-node adjacency in CSR form, plus file IO and generators."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ParseError


class Graph:
    """Undirected weighted graph over nodes 0..n-1.

    Adjacency is stored in CSR form with sorted neighbor lists. Every edge
    appears in both endpoint lists; self-loops are dropped at construction.
    Instances are immutable after construction and safe to share.
    """

    def __init__(self, n, ptr, nbr, wgt):
        self.n = int(n)
        self.ptr = ptr
        self.nbr = nbr
        self.wgt = wgt

    @classmethod
    def from_edges(cls, n, u, v, w=None):
        """Build a graph from endpoint arrays; symmetrizes and deduplicates."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if u.size and (u.min() < 0 or v.min() < 0 or u.max() >= n or v.max() >= n):
            raise ConfigError("edge endpoint out of range")
        if w is None:
            w = np.ones(u.size, dtype=np.float64)
        else:
            w = np.asarray(w, dtype=np.float64)
        keep = u != v
        u, v, w = u[keep], v[keep], w[keep]
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        wall = np.concatenate([w, w])
        order = np.lexsort((dst, src))
        src, dst, wall = src[order], dst[order], wall[order]
        if src.size:
            first = np.ones(src.size, dtype=bool)
            first[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
            src, dst, wall = src[first], dst[first], wall[first]
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(ptr, src + 1, 1)
        np.cumsum(ptr, out=ptr)
        return cls(n, ptr, dst.astype(np.int32), wall)

    def neighbors(self, i):
        return self.nbr[self.ptr[i]:self.ptr[i + 1]]

    def weights(self, i):
        return self.wgt[self.ptr[i]:self.ptr[i + 1]]

    def degree(self, i):
        return int(self.ptr[i + 1] - self.ptr[i])

    @property
    def edge_count(self):
        return self.nbr.size // 2

    def edges(self):
        """Yield each undirected edge once as (a, b, w) with a < b."""
        for a in range(self.n):
            row = slice(self.ptr[a], self.ptr[a + 1])
            for b, w in zip(self.nbr[row], self.wgt[row]):
                if a < b:
                    yield a, int(b), float(w)

    def edge_arrays(self):
        """Arrays (a, b, w) holding each undirected edge once, a < b."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.ptr))
        keep = src < self.nbr
        return src[keep], self.nbr[keep].astype(np.int64), self.wgt[keep]

    def adjacency(self):
        """Symmetric adjacency matrix as scipy CSR."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.ptr))
        return sp.csr_matrix((self.wgt, (src, self.nbr)), shape=(self.n, self.n))

    def laplacian(self):
        """Graph Laplacian D - W as scipy CSR."""
        a = self.adjacency()
        deg = np.asarray(a.sum(axis=1)).ravel()
        return sp.diags(deg) - a

    def power_union(self, coeffs):
        """Graph whose weights are sum_d coeffs[d-1] * [A^d reaches in d hops].

        Each power is binarized (any walk of length d counts once) with the
        diagonal removed, so the result encodes weighted multi-hop adjacency.
        Intended for small graphs; powers densify quickly.
        """
        a = self.adjacency()
        a.data[:] = 1.0
        acc = sp.csr_matrix((self.n, self.n))
        cur = sp.identity(self.n, format="csr")
        for coeff in coeffs:
            cur = (cur @ a).tocsr()
            cur.data[:] = 1.0
            hop = cur - sp.diags(cur.diagonal())
            hop.eliminate_zeros()
            acc = acc + coeff * hop
        acc = acc.tocoo()
        keep = acc.row < acc.col
        return Graph.from_edges(self.n, acc.row[keep], acc.col[keep], acc.data[keep])

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.ptr, other.ptr)
            and np.array_equal(self.nbr, other.nbr)
            and np.array_equal(self.wgt, other.wgt)
        )


def erdos_renyi(n, p, rng):
    """Erdos-Renyi random graph: each of the n(n-1)/2 edges kept with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"edge probability must be in [0, 1], got {p}")
    us, vs = [], []
    for a in range(n - 1):
        mask = rng.random(n - 1 - a) < p
        hits = np.nonzero(mask)[0]
        if hits.size:
            us.append(np.full(hits.size, a, dtype=np.int64))
            vs.append(hits + a + 1)
    u = np.concatenate(us) if us else np.empty(0, dtype=np.int64)
    v = np.concatenate(vs) if vs else np.empty(0, dtype=np.int64)
    return Graph.from_edges(n, u, v)


def load_graph(path_or_stream, n=None):
    """Read an edge list of "u v [w]" lines; '#' starts a comment line.

    A "# nodes N" comment pins the node count (written by save_graph so that
    trailing isolated nodes survive a round trip); otherwise the count
    defaults to 1 + max endpoint seen.
    """
    close = False
    if hasattr(path_or_stream, "read"):
        stream = path_or_stream
    else:
        stream = open(path_or_stream, "r", encoding="utf-8")
        close = True
    us, vs, ws = [], [], []
    try:
        for line_no, line in enumerate(stream, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                parts = line[1:].split()
                if n is None and len(parts) == 2 and parts[0] == "nodes":
                    n = int(parts[1])
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ParseError(f"expected 'u v [w]', got {line!r}", line_no)
            try:
                a, b = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from None
            if a < 0 or b < 0:
                raise ParseError("negative node id", line_no)
            us.append(a)
            vs.append(b)
            ws.append(w)
    finally:
        if close:
            stream.close()
    if n is None:
        n = 1 + max(max(us, default=-1), max(vs, default=-1))
        n = max(n, 0)
    return Graph.from_edges(n, np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64), np.array(ws))


def save_graph(graph, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes {graph.n}\n")
        for a, b, w in graph.edges():
            if w == 1.0:
                fh.write(f"{a} {b}\n")
            else:
                fh.write(f"{a} {b} {w!r}\n")
