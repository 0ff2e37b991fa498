"""Fenwick (binary indexed) tree over a fixed range of levels."""

import numpy as np


class FenwickTree:
    """Logarithmic-time point updates and prefix/suffix sums over levels 1..size.

    Suffix sums are computed as total minus prefix, so both directions cost
    O(log size). Values are float64; use a second tree for counts.
    """

    def __init__(self, size):
        if size < 1:
            raise ValueError("size must be >= 1")
        self.size = int(size)
        self.tree = np.zeros(self.size + 1, dtype=np.float64)
        self.total = 0.0

    def add(self, level, value=1.0):
        """Add value at the given level (1-based)."""
        if not 1 <= level <= self.size:
            raise IndexError(f"level {level} outside 1..{self.size}")
        i = level
        while i <= self.size:
            self.tree[i] += value
            i += i & (-i)
        self.total += value

    def prefix_sum(self, level):
        """Sum over levels 1..level; level 0 gives 0."""
        if level > self.size:
            level = self.size
        s = 0.0
        i = level
        while i > 0:
            s += self.tree[i]
            i -= i & (-i)
        return s

    def suffix_sum(self, level):
        """Sum over levels level..size."""
        return self.total - self.prefix_sum(level - 1)
