"""Slot-based priority queue between the broadcast and agreement components.

Each origin replica owns one queue keyed by its local priorities. Slots are
write-once and tombstoned permanently once their batch is delivered; the
head is the smallest priority not yet used, even if that slot is still empty.
"""

from __future__ import annotations

import enum

from heron_bft.models import Batch, ReplicaId


class SlotState(enum.Enum):
    EMPTY = "empty"
    FILLED = "filled"
    USED = "used"


class PriorityQueue:
    def __init__(self, queue_id: ReplicaId) -> None:
        self.id = queue_id
        self._head = 0
        self._filled: dict[int, Batch] = {}
        self._used: set[int] = set()  # tombstones at or above head
        self._by_digest: dict[bytes, set[int]] = {}

    @property
    def head(self) -> int:
        return self._head

    def state(self, s: int) -> SlotState:
        if s < self._head or s in self._used:
            return SlotState.USED
        if s in self._filled:
            return SlotState.FILLED
        return SlotState.EMPTY

    def enqueue(self, s: int, v: Batch) -> bool:
        """Fill slot *s* if it is empty. Returns True when the value was stored."""
        if s < 0:
            raise ValueError(f"priority must be non-negative, got {s}")
        if self.state(s) is not SlotState.EMPTY:
            return False
        self._filled[s] = v
        self._by_digest.setdefault(v.digest, set()).add(s)
        return True

    def dequeue(self, v: Batch) -> None:
        """Tombstone every filled slot holding a batch equal to *v*."""
        slots = self._by_digest.pop(v.digest, None)
        if not slots:
            return
        for s in slots:
            del self._filled[s]
            self._used.add(s)
        while self._head in self._used:
            self._used.discard(self._head)
            self._head += 1

    def peek(self) -> Batch | None:
        return self._filled.get(self._head)

    def filled_slots(self) -> list[int]:
        return sorted(self._filled)

    def __repr__(self) -> str:
        return f"PriorityQueue(id={self.id}, head={self._head}, filled={self.filled_slots()})"
