"""Fixed-capacity ring buffer of timestamped transitions.

Each transition records the global environment step at which it was
collected; a transition's *age* at time ``now`` is ``now - timestamp``.
The buffer keeps timestamps in a parallel int64 array so that age vectors
for the whole buffer are a single vectorized subtraction.

Indexing convention: all public lookups (``get``, ``ages``, ``timestamps``,
sampler indices) use *logical* age order, where index 0 is the oldest live
entry. ``push`` returns the physical ring slot, which only matters to
callers that track slots across evictions (the PER sum tree does).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import EmptyBufferError, OrderingError


@dataclass
class TimestampedTransition:
    """One (s, a, r, s', done) tuple plus the global step it was collected at."""

    state: Any
    action: Any
    reward: float
    next_state: Any
    done: bool
    timestamp: int


class ReplayBuffer:
    """FIFO ring buffer with monotone insertion timestamps.

    When full, a push overwrites the entry with the smallest timestamp, so
    the set of live timestamps is always the ``capacity`` largest seen.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: list[TimestampedTransition | None] = [None] * capacity
        self._timestamps = np.zeros(capacity, dtype=np.int64)
        self._write_cursor = 0
        self._size = 0
        self._pushes = 0
        self.global_step = 0

    def __len__(self) -> int:
        return self._size

    @property
    def size(self) -> int:
        return self._size

    @property
    def pushes(self) -> int:
        """Total number of pushes ever performed (never decreases)."""
        return self._pushes

    def push(self, tr: TimestampedTransition) -> int:
        """Store a transition; returns the physical slot it landed in.

        Rejects timestamps older than the newest stored entry: insertion
        order must follow collection order or age bookkeeping breaks.
        """
        if tr.timestamp < 0:
            raise OrderingError(f"timestamp must be non-negative, got {tr.timestamp}")
        if self._size > 0:
            newest = self._newest_timestamp()
            if tr.timestamp < newest:
                raise OrderingError(
                    f"non-monotone timestamp {tr.timestamp} < newest stored {newest}"
                )
        slot = self._write_cursor
        self._entries[slot] = tr
        self._timestamps[slot] = tr.timestamp
        self._write_cursor = (self._write_cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self._pushes += 1
        self.global_step = max(self.global_step, tr.timestamp)
        return slot

    def get(self, index: int) -> TimestampedTransition:
        """Fetch by logical index (0 = oldest live entry)."""
        if not 0 <= index < self._size:
            raise IndexError(f"logical index {index} out of range [0, {self._size})")
        entry = self._entries[self.logical_to_physical(index)]
        assert entry is not None
        return entry

    def logical_to_physical(self, index: int) -> int:
        return (self._write_cursor - self._size + index) % self.capacity

    def physical_to_logical(self, slot: int) -> int:
        return (slot - (self._write_cursor - self._size)) % self.capacity

    def timestamps(self) -> np.ndarray:
        """Live timestamps in logical (oldest-first) order."""
        return self.timestamps_at(np.arange(self._size))

    def timestamps_at(self, logical_indices: np.ndarray) -> np.ndarray:
        """Timestamps at the given logical indices; O(len(indices))."""
        start = (self._write_cursor - self._size) % self.capacity
        return self._timestamps[(start + logical_indices) % self.capacity]

    def ages(self, now: int) -> np.ndarray:
        """Per-entry age ``now - timestamp`` in logical order (oldest first)."""
        if self._size == 0:
            raise EmptyBufferError("ages() on an empty buffer")
        ts = self.timestamps()
        if now < ts[-1]:
            raise ValueError(f"now={now} precedes newest stored timestamp {ts[-1]}")
        return now - ts

    def _newest_timestamp(self) -> int:
        newest_slot = (self._write_cursor - 1) % self.capacity
        return int(self._timestamps[newest_slot])
