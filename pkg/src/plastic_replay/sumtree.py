"""Prefix-sum binary tree over non-negative leaf priorities.

Array-backed complete binary tree: internal node value = sum of its two
children, root holds the total. Supports O(log n) point updates and
O(log n) prefix lookups, which is what proportional prioritized sampling
needs.
"""

from __future__ import annotations

import numpy as np


def _next_power_of_two(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


class SumTree:
    def __init__(self, leaf_count: int):
        if leaf_count < 1:
            raise ValueError(f"leaf_count must be >= 1, got {leaf_count}")
        self.leaf_count = _next_power_of_two(leaf_count)
        # nodes[0] is the root; leaves occupy the last leaf_count slots.
        self.nodes = np.zeros(2 * self.leaf_count - 1, dtype=np.float64)

    def total(self) -> float:
        return float(self.nodes[0])

    def leaf(self, leaf: int) -> float:
        self._check_leaf(leaf)
        return float(self.nodes[leaf + self.leaf_count - 1])

    def leaves(self) -> np.ndarray:
        return self.nodes[self.leaf_count - 1 :].copy()

    def update(self, leaf: int, value: float) -> None:
        """Set one leaf and refresh all ancestors."""
        self._check_leaf(leaf)
        if not value >= 0.0:
            raise ValueError(f"leaf value must be non-negative, got {value}")
        idx = leaf + self.leaf_count - 1
        change = value - self.nodes[idx]
        self.nodes[idx] = value
        while idx > 0:
            idx = (idx - 1) // 2
            self.nodes[idx] += change

    def rebuild(self) -> None:
        """Recompute every internal node from the leaves, clearing any
        rounding drift accumulated by incremental updates."""
        for idx in range(self.leaf_count - 2, -1, -1):
            self.nodes[idx] = self.nodes[2 * idx + 1] + self.nodes[2 * idx + 2]

    def find_prefix(self, u: float) -> int:
        """Leaf index i with cumsum(0..i-1) <= u < cumsum(0..i).

        Intervals are half-open, so at an exact boundary the walk descends
        right; zero-priority leaves own empty intervals and are never hit.
        """
        total = self.nodes[0]
        if total <= 0.0:
            raise ValueError("find_prefix on a tree with zero total")
        if not 0.0 <= u < total:
            raise ValueError(f"prefix value {u} outside [0, {total})")
        idx = 0
        while idx < self.leaf_count - 1:
            left = 2 * idx + 1
            if u < self.nodes[left]:
                idx = left
            else:
                u -= self.nodes[left]
                idx = left + 1
        return idx - (self.leaf_count - 1)

    def _check_leaf(self, leaf: int) -> None:
        if not 0 <= leaf < self.leaf_count:
            raise IndexError(f"leaf {leaf} out of range [0, {self.leaf_count})")
