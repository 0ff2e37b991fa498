"""Bloom filters and the multi-hop neighborhood sketch built from them.

Each node of a side-information graph gets a Bloom filter that accumulates the
node's d-hop neighborhood by repeated unions with its direct neighbors'
previous-round filters. Stacking the bit arrays gives an n x c boolean matrix
whose columns act as pseudo-nodes when appended to the original graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import IMPLICIT, RatingsMatrix
from .errors import ConfigError, ParseError
from .graphs import Graph

_LN2 = math.log(2.0)
_MASK64 = (1 << 64) - 1


def _mix64(x):
    """SplitMix64 finalizer; decorrelates consecutive integers."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def bloom_params(capacity, fp_rate):
    """Classic sizing: bits c and hash count k for a target false-positive rate.

    c = ceil(capacity * ln(1/eps) / ln^2 2),  k = max(1, round(c/capacity * ln 2)).
    """
    if not 0.0 < fp_rate < 1.0:
        raise ConfigError("fp_rate must be in (0, 1)")
    if capacity < 1:
        raise ConfigError("capacity must be >= 1")
    c = math.ceil(capacity * math.log(1.0 / fp_rate) / (_LN2 * _LN2))
    k = max(1, int(math.floor(c / capacity * _LN2 + 0.5)))
    return c, k


def hash_seeds_from(seed):
    """Two independent 64-bit hash seeds derived from one integer seed."""
    state = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


class BloomFilter:
    """Fixed-size bit-array sketch with add/contains/union.

    Membership positions come from double hashing: h_t(x) = (h1(x) + t*h2(x)) mod c.
    Two filters can be unioned iff they share (c, k, seeds).
    """

    def __init__(self, c, k, seeds):
        if c < 1 or k < 1:
            raise ConfigError("c and k must be >= 1")
        if c < k:
            raise ConfigError(f"bit array of {c} bits cannot hold {k} hash positions")
        self.c = int(c)
        self.k = int(k)
        self.seeds = (int(seeds[0]), int(seeds[1]))
        self.bits = np.zeros(self.c, dtype=bool)
        self.insert_count = 0

    @classmethod
    def with_capacity(cls, capacity, fp_rate, seed=0):
        c, k = bloom_params(capacity, fp_rate)
        return cls(c, k, hash_seeds_from(seed))

    def positions(self, x):
        h1 = _mix64(int(x) ^ self.seeds[0])
        h2 = _mix64(int(x) ^ self.seeds[1]) | 1
        return [(h1 + t * h2) % self.c for t in range(self.k)]

    def add(self, x):
        self.bits[self.positions(x)] = True
        self.insert_count += 1

    def contains(self, x):
        return bool(self.bits[self.positions(x)].all())

    def union(self, other):
        """Bitwise-OR another filter into this one (same c, k, seeds required)."""
        if (self.c, self.k, self.seeds) != (other.c, other.k, other.seeds):
            raise ConfigError("can only union filters with identical (c, k, seeds)")
        self.bits |= other.bits
        self.insert_count += other.insert_count

    @property
    def nnz(self):
        return int(np.count_nonzero(self.bits))

    def size_estimate(self):
        """Estimated number of stored elements: -(c/k) * ln(1 - nnz/c).

        A saturated filter (every bit set) returns +inf.
        """
        return size_estimate_from_counts(self.nnz, self.c, self.k)


def size_estimate_from_counts(nnz, c, k):
    if nnz == 0:
        return 0.0
    if nnz >= c:
        return math.inf
    return -(c / k) * math.log(1.0 - nnz / c)


@dataclass
class DnaEncoding:
    """Stacked node sketches: row i holds the bit array of node i's filter."""

    matrix: sp.csr_matrix  # n x c boolean, stored as uint8
    c: int
    k: int
    depth: int
    theta: float
    seeds: tuple[int, int]

    @property
    def n(self):
        return self.matrix.shape[0]

    def row_bits(self, i):
        """Set-bit column indices of row i, sorted ascending."""
        lo, hi = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return self.matrix.indices[lo:hi]

    @property
    def nnz(self):
        return int(self.matrix.nnz)


def dna_encode(graph, c, k, depth, theta=math.inf, seed=0):
    """Encode every node's d-hop neighborhood into a shared-seed Bloom filter row.

    Round 0 inserts each node into its own filter. Each subsequent round
    unions, into node i's filter, the previous-round filters of i's direct
    neighbors; the unions for a node stop for the round once its size estimate
    exceeds theta. All rounds read the previous round's filters only, so the
    result does not depend on node processing order.
    """
    if depth < 0:
        raise ConfigError("depth must be >= 0")
    if theta <= 0:
        raise ConfigError("theta must be positive")
    if c < k:
        raise ConfigError(f"bit array of {c} bits cannot hold {k} hash positions")
    n = graph.n
    seeds = hash_seeds_from(seed)
    proto = BloomFilter(c, k, seeds)
    bits = np.zeros((n, c), dtype=bool)
    for i in range(n):
        bits[i, proto.positions(i)] = True
    capped = math.isfinite(theta)
    for _ in range(depth):
        prev = bits
        bits = prev.copy()
        for i in range(n):
            row = bits[i]
            for j in graph.neighbors(i):
                if capped and size_estimate_from_counts(
                        int(np.count_nonzero(row)), c, k) > theta:
                    break
                row |= prev[j]
    return DnaEncoding(sp.csr_matrix(bits, dtype=np.uint8), c, k, depth, theta, seeds)


def augment_graph(graph, encoding):
    """Append the c sketch bits as pseudo-nodes: block graph [[G, B], [B^T, 0]].

    Every set bit (i, j) becomes a unit-weight edge between real node i and
    pseudo-node n + j.
    """
    if encoding.n != graph.n:
        raise ConfigError("encoding and graph must have the same node count")
    src, dst, wgt = graph.edge_arrays()
    rows, cols = encoding.matrix.nonzero()
    u = np.concatenate([src, rows.astype(np.int64)])
    v = np.concatenate([dst, cols.astype(np.int64) + graph.n])
    w = np.concatenate([wgt, np.ones(rows.size)])
    return Graph.from_edges(graph.n + encoding.c, u, v, w)


def bipartite_view(encoding):
    """Reinterpret the n x c bit matrix as implicit ratings (a 1 per set bit)."""
    rows, cols = encoding.matrix.nonzero()
    return RatingsMatrix(encoding.n, encoding.c,
                         rows.astype(np.int64), cols.astype(np.int64),
                         np.ones(rows.size), mode=IMPLICIT)


def save_encoding(encoding, path):
    """Persist header plus one line of set-bit indices per row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("DNA-ENCODING v1\n")
        fh.write(f"n {encoding.n} c {encoding.c} k {encoding.k} d {encoding.depth}\n")
        fh.write(f"theta {encoding.theta!r}\n")
        fh.write(f"seeds {encoding.seeds[0]} {encoding.seeds[1]}\n")
        for i in range(encoding.n):
            fh.write(" ".join(str(b) for b in encoding.row_bits(i)) + "\n")


def load_encoding(path):
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != "DNA-ENCODING v1":
            raise ParseError(f"not an encoding file (header {magic!r})", 1)
        head = fh.readline().split()
        n, c, k, d = int(head[1]), int(head[3]), int(head[5]), int(head[7])
        theta = float(fh.readline().split()[1])
        sparts = fh.readline().split()
        seeds = (int(sparts[1]), int(sparts[2]))
        indptr = np.zeros(n + 1, dtype=np.int64)
        indices = []
        for i in range(n):
            row = fh.readline().split()
            indptr[i + 1] = indptr[i] + len(row)
            indices.extend(int(b) for b in row)
    matrix = sp.csr_matrix(
        (np.ones(len(indices), dtype=np.uint8),
         np.array(indices, dtype=np.int32), indptr),
        shape=(n, c))
    return DnaEncoding(matrix, c, k, d, theta, seeds)
