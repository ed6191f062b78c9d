"""Broadcast component: batch client messages and feed VCBC outputs into the queues."""

from __future__ import annotations

from dataclasses import dataclass, field

from heron_bft.models import Batch, ClientMessage, ReplicaId
from heron_bft.protocol.pqueue import PriorityQueue


@dataclass
class BcState:
    batch_size: int
    buf: list[ClientMessage] = field(default_factory=list)
    priority: int = 0
    proposed: set[bytes] = field(default_factory=set)  # ids already placed in a batch

    def on_client_message(
        self, m: ClientMessage, delivered: set[bytes]
    ) -> tuple[int, Batch] | None:
        """Buffer *m*; once B messages are gathered returns (priority, batch) to broadcast."""
        if m.id in delivered or m.id in self.proposed or any(x.id == m.id for x in self.buf):
            return None
        self.buf.append(m)
        if len(self.buf) < self.batch_size:
            return None
        return self._cut()

    def flush(self) -> tuple[int, Batch] | None:
        """Harness-level drain of a partial buffer; not part of the protocol."""
        if not self.buf:
            return None
        return self._cut()

    def _cut(self) -> tuple[int, Batch]:
        batch = Batch(tuple(self.buf))
        priority = self.priority
        self.proposed.update(m.id for m in self.buf)
        self.buf.clear()
        self.priority += 1
        return priority, batch


def on_vcbc_output(
    queues: list[PriorityQueue],
    origin: ReplicaId,
    priority: int,
    m: Batch,
    delivered: set[bytes],
) -> bool:
    """Enqueue a delivered VCBC batch, tombstoning it at once if it carries nothing new.

    Returns True when the batch was stored and left in the queue.
    """
    queue = queues[origin]
    stored = queue.enqueue(priority, m)
    if all(entry.id in delivered for entry in m.entries):
        queue.dequeue(m)
        return False
    return stored
