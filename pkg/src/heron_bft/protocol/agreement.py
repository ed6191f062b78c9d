"""Agreement component: one binary agreement per round over the queue F(r).

The blocking waits of the round loop are encoded as phases:
PROPOSING -> AWAITING_ABA -> (AWAITING_VALUE) -> PROPOSING of round r+1.
"""

from __future__ import annotations

import enum
from collections.abc import Callable
from dataclasses import dataclass, field

from heron_bft.errors import ProtocolViolation
from heron_bft.models import (
    Batch,
    ClientMessage,
    FillerResponse,
    FillGapRequest,
    VcbcId,
    VerifiableMessage,
    queue_map,
)
from heron_bft.protocol.pqueue import PriorityQueue


class Phase(enum.Enum):
    PROPOSING = "proposing"
    AWAITING_ABA = "awaiting_aba"
    AWAITING_VALUE = "awaiting_value"


class Action(enum.Enum):
    ADVANCE = "advance"
    DELIVER = "deliver"
    FILL_GAP = "fill_gap"


@dataclass
class AcStep:
    action: Action
    round: int
    queue: int
    slot: int
    value: Batch | None = None
    outputs: list[ClientMessage] = field(default_factory=list)
    request: FillGapRequest | None = None


def ac_deliver(
    value: Batch, queues: list[PriorityQueue], delivered: set[bytes]
) -> list[ClientMessage]:
    """Tombstone *value* in every queue and output its entries not yet delivered."""
    for queue in queues:
        queue.dequeue(value)
    outputs = []
    for m in value.entries:
        if m.id not in delivered:
            delivered.add(m.id)
            outputs.append(m)
    return outputs


@dataclass
class AcState:
    n: int
    r: int = 0
    phase: Phase = Phase.PROPOSING
    proposal: int | None = None

    def queue(self, queues: list[PriorityQueue]) -> PriorityQueue:
        return queues[queue_map(self.r, self.n)]

    def begin_round(self, queues: list[PriorityQueue]) -> int:
        """Return the proposal for ABA(r): 1 iff the head of F(r) is filled."""
        if self.phase is not Phase.PROPOSING:
            raise ProtocolViolation(f"round {self.r} already begun")
        self.proposal = 1 if self.queue(queues).peek() is not None else 0
        self.phase = Phase.AWAITING_ABA
        return self.proposal

    def on_aba_decision(
        self, queues: list[PriorityQueue], r: int, b: int, delivered: set[bytes]
    ) -> AcStep:
        if r != self.r or self.phase is not Phase.AWAITING_ABA:
            raise ProtocolViolation(
                f"decision for round {r} while at {self.r} ({self.phase.value})"
            )
        queue = self.queue(queues)
        if b == 0:
            step = AcStep(Action.ADVANCE, r, queue.id, queue.head)
            self._advance()
            return step
        if queue.peek() is None:
            self.phase = Phase.AWAITING_VALUE
            request = FillGapRequest(queue.id, queue.head)
            return AcStep(Action.FILL_GAP, r, queue.id, queue.head, request=request)
        return self._deliver(queues, queue, delivered)

    def try_complete(self, queues: list[PriorityQueue], delivered: set[bytes]) -> AcStep | None:
        """Finish a round waiting on a recovered value once the head is filled."""
        if self.phase is not Phase.AWAITING_VALUE:
            return None
        queue = self.queue(queues)
        if queue.peek() is None:
            return None
        return self._deliver(queues, queue, delivered)

    def _deliver(
        self, queues: list[PriorityQueue], queue: PriorityQueue, delivered: set[bytes]
    ) -> AcStep:
        value = queue.peek()
        step = AcStep(Action.DELIVER, self.r, queue.id, queue.head, value=value)
        step.outputs = ac_deliver(value, queues, delivered)
        self._advance()
        return step

    def _advance(self) -> None:
        self.r += 1
        self.phase = Phase.PROPOSING
        self.proposal = None


def on_fill_gap(
    queues: list[PriorityQueue],
    request: FillGapRequest,
    prove: Callable[[VcbcId], VerifiableMessage | None],
) -> FillerResponse | None:
    """Answer a recovery request with every proof held for [slot, head] of the queue.

    Returns None when this replica's head is still below the requested slot or
    it holds no proof in the range.
    """
    queue = queues[request.queue]
    if queue.head < request.slot:
        return None
    entries = []
    for s in range(request.slot, queue.head + 1):
        m = prove(VcbcId(queue.id, s))
        if m is not None:
            entries.append(m)
    if not entries:
        return None
    return FillerResponse(tuple(entries))
