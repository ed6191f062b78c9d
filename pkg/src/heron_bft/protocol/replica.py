"""Replica state machine composing queues, VCBC, binary agreement and recovery.

All mutation flows through handle(); every call returns the messages to send,
the client messages output in total order and the notes describing what
happened, so the same event sequence always reproduces the same outputs.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Union

from heron_bft.codec import decode
from heron_bft.constants import (
    ABA_BACKLOG_ROUNDS,
    ABA_LOOKAHEAD_ROUNDS,
    ABA_MAX_BUFFERED_PER_SENDER,
)
from heron_bft.crypto.keys import ReplicaKeys
from heron_bft.errors import ConfigError, ParseError
from heron_bft.models import (
    AbaDecided,
    BatchDelivered,
    ClientMessage,
    Config,
    FillGapSent,
    MessageKind,
    Note,
    Outbound,
    ProtocolMessage,
    ReplicaId,
    RoundStarted,
    VcbcDelivered,
    VcbcId,
    VcbcProposed,
    VerifiableMessage,
    quorums,
)
from heron_bft.protocol.aba import AbaInstance
from heron_bft.protocol.agreement import AcState, AcStep, Action, Phase, on_fill_gap
from heron_bft.protocol.broadcast import BcState, on_vcbc_output
from heron_bft.protocol.pqueue import PriorityQueue
from heron_bft.protocol.vcbc import VcbcInstance

logger = logging.getLogger("heron-bft")


# --- Events and outputs ---

@dataclass(frozen=True)
class ClientSubmit:
    message: ClientMessage


@dataclass(frozen=True)
class Receive:
    src: ReplicaId
    data: bytes


@dataclass(frozen=True)
class HarnessFlush:
    pass


@dataclass(frozen=True)
class Start:
    pass


ReplicaEvent = Union[Start, ClientSubmit, Receive, HarnessFlush]


@dataclass
class ReplicaOutput:
    outbound: list[Outbound] = field(default_factory=list)
    delivered: list[ClientMessage] = field(default_factory=list)
    notes: list[Note] = field(default_factory=list)


# --- Replica ---

class Replica:
    def __init__(
        self,
        replica: ReplicaId,
        cfg: Config,
        keys: ReplicaKeys,
        *,
        lookahead: int = ABA_LOOKAHEAD_ROUNDS,
    ) -> None:
        if not 0 <= replica < cfg.n:
            raise ConfigError(f"replica id {replica} outside [0, {cfg.n})")
        q = quorums(cfg)
        for pk, threshold in ((keys.vcbc_public, q.echo), (keys.coin_public, q.weak)):
            if pk.n != cfg.n or pk.threshold != threshold:
                raise ConfigError(
                    f"keys dealt for (n={pk.n}, t={pk.threshold}), "
                    f"config needs (n={cfg.n}, t={threshold})"
                )
        if keys.replica != replica:
            raise ConfigError(f"keys belong to replica {keys.replica}, not {replica}")
        self.id = replica
        self.cfg = cfg
        self.keys = keys
        self.lookahead = lookahead
        self.delivered: set[bytes] = set()
        self.queues = [PriorityQueue(x) for x in cfg.replicas]
        self.bc = BcState(cfg.batch_size)
        self.ac = AcState(cfg.n)
        self.vcbc_instances: dict[VcbcId, VcbcInstance] = {}
        self.aba_instances: dict[int, AbaInstance] = {}
        self.violations: Counter = Counter()
        self.output_chain = bytes(32)
        self.output_count = 0
        self._aba_backlog: dict[int, list[ProtocolMessage]] = {}
        self._backlog_per_sender: Counter = Counter()
        # every internal round one instance will accept
        self._backlog_cap = ABA_MAX_BUFFERED_PER_SENDER * (lookahead + 1)
        self._started = False

    # --- public API ---

    def start(self) -> ReplicaOutput:
        """Begin round 0; a quiet system proposes 0."""
        if self._started:
            return ReplicaOutput()
        self._started = True
        out = ReplicaOutput()
        self._drive(out)
        return out

    def handle(self, event: ReplicaEvent) -> ReplicaOutput:
        if isinstance(event, Start):
            return self.start()
        out = ReplicaOutput()
        if isinstance(event, ClientSubmit):
            self._on_client_message(event.message, out)
        elif isinstance(event, HarnessFlush):
            self._propose(self.bc.flush(), out)
        elif isinstance(event, Receive):
            self._on_receive(event.src, event.data, out)
        else:
            raise TypeError(f"unknown event {event!r}")
        if self._started:
            self._drive(out)
        return out

    def broadcast_api(self, payload: bytes) -> ReplicaOutput:
        if not payload:
            raise ValueError("empty payload")
        return self.handle(ClientSubmit(ClientMessage(payload)))

    def snapshot(self) -> dict:
        return {
            "replica": self.id,
            "round": self.ac.r,
            "phase": self.ac.phase.value,
            "delivered": len(self.delivered),
            "output_chain": self.output_chain.hex(),
            "heads": [q.head for q in self.queues],
            "next_priority": self.bc.priority,
            "violations": dict(sorted(self.violations.items())),
        }

    # --- broadcast component ---

    def _on_client_message(self, m: ClientMessage, out: ReplicaOutput) -> None:
        self._propose(self.bc.on_client_message(m, self.delivered), out)

    def _propose(self, cut, out: ReplicaOutput) -> None:
        if cut is None:
            return
        priority, batch = cut
        inst = self._vcbc(VcbcId(self.id, priority))
        out.outbound.extend(inst.vcbc_broadcast(batch))
        out.notes.append(VcbcProposed(priority, batch.digest))

    def _vcbc(self, vid: VcbcId) -> VcbcInstance:
        inst = self.vcbc_instances.get(vid)
        if inst is None:
            inst = VcbcInstance(vid, self.id, self.cfg, self.keys, self.violations)
            self.vcbc_instances[vid] = inst
        return inst

    def _on_final(self, m: VerifiableMessage, out: ReplicaOutput) -> None:
        if not 0 <= m.id.origin < self.cfg.n:
            self._violation("bad_origin")
            return
        delivery = self._vcbc(m.id).on_final(m)
        if delivery is None:
            return
        out.notes.append(VcbcDelivered(m.id.origin, m.id.priority, m.payload.digest))
        on_vcbc_output(self.queues, m.id.origin, m.id.priority, m.payload, self.delivered)

    def _prove(self, vid: VcbcId) -> VerifiableMessage | None:
        inst = self.vcbc_instances.get(vid)
        if inst is None or not inst.delivered:
            return None
        return inst.make_verifiable_message()

    # --- message routing ---

    def _violation(self, reason: str) -> None:
        self.violations[reason] += 1
        logger.debug(f"replica {self.id}: {reason}")

    def _on_receive(self, src: ReplicaId, data: bytes, out: ReplicaOutput) -> None:
        try:
            msg = decode(data)
        except ParseError:
            self._violation("malformed")
            return
        if msg.sender != src or not 0 <= src < self.cfg.n:
            self._violation("sender_mismatch")
            return
        kind = msg.kind
        if kind.family == "vcbc":
            if not 0 <= msg.instance.origin < self.cfg.n:
                self._violation("bad_origin")
                return
            if kind == MessageKind.VCBC_SEND:
                out.outbound.extend(self._vcbc(msg.instance).on_send(msg.sender, msg.body))
            elif kind == MessageKind.VCBC_ECHO_SHARE:
                inst = self.vcbc_instances.get(msg.instance)
                if inst is None or not inst.is_sender:
                    self._violation("vcbc_unexpected_echo")
                    return
                out.outbound.extend(inst.on_echo_share(msg.sender, msg.body))
            elif msg.body.id != msg.instance:
                self._violation("vcbc_instance_mismatch")
            else:
                self._on_final(msg.body, out)
        elif kind.family == "aba":
            self._on_aba(msg, out)
        elif kind == MessageKind.FILL_GAP:
            self._on_fill_gap(msg, out)
        else:
            self._on_filler(msg, out)

    def _on_filler(self, msg: ProtocolMessage, out: ReplicaOutput) -> None:
        # entries are checked one by one against their own proofs
        for entry in msg.body.entries:
            self._on_final(entry, out)

    def _on_aba(self, msg: ProtocolMessage, out: ReplicaOutput) -> None:
        r = msg.instance
        if r > self.ac.r or r not in self.aba_instances:
            self._hold_aba(r, msg)
            return
        out.outbound.extend(self.aba_instances[r].handle(msg))

    def _hold_aba(self, r: int, msg: ProtocolMessage) -> None:
        if r > self.ac.r + ABA_BACKLOG_ROUNDS:
            self._violation("aba_backlog_round_overflow")
            return
        finish = msg.kind == MessageKind.ABA_FINISH
        key = (r, msg.sender, finish)
        if self._backlog_per_sender[key] >= (1 if finish else self._backlog_cap):
            self._violation("aba_backlog_overflow")
            return
        self._backlog_per_sender[key] += 1
        self._aba_backlog.setdefault(r, []).append(msg)

    def _on_fill_gap(self, msg: ProtocolMessage, out: ReplicaOutput) -> None:
        request = msg.body
        if request.queue != msg.instance or not 0 <= request.queue < self.cfg.n:
            self._violation("bad_fill_gap")
            return
        response = on_fill_gap(self.queues, request, self._prove)
        if response is not None:
            filler = ProtocolMessage(MessageKind.FILLER, request.queue, self.id, response)
            out.outbound.append(Outbound(filler, dest=msg.sender))

    # --- agreement loop ---

    def _drive(self, out: ReplicaOutput) -> None:
        """Run the round loop until it has to wait for a message."""
        while True:
            ac = self.ac
            if ac.phase is Phase.PROPOSING:
                self._begin_round(out)
                continue
            if ac.phase is Phase.AWAITING_ABA:
                decision = self.aba_instances[ac.r].pop_decision()
                if decision is None:
                    return
                out.notes.append(AbaDecided(ac.r, decision.value, decision.decided_round))
                step = ac.on_aba_decision(self.queues, ac.r, decision.value, self.delivered)
            else:
                step = ac.try_complete(self.queues, self.delivered)
                if step is None:
                    return
            self._apply(step, out)

    def _begin_round(self, out: ReplicaOutput) -> None:
        ac = self.ac
        r = ac.r
        queue = ac.queue(self.queues)
        head_value = queue.peek()
        proposal = ac.begin_round(self.queues)
        out.notes.append(
            RoundStarted(
                round=r,
                queue=queue.id,
                head=queue.head,
                head_digest=head_value.digest if head_value is not None else b"",
                proposal=proposal,
                delivered_count=self.output_count,
                output_chain=self.output_chain,
            )
        )
        inst = AbaInstance(r, self.id, self.cfg, self.keys, self.violations, self.lookahead)
        self.aba_instances[r] = inst
        out.outbound.extend(inst.propose(proposal))
        for sender in self.cfg.replicas:
            self._backlog_per_sender.pop((r, sender, False), None)
            self._backlog_per_sender.pop((r, sender, True), None)
        for msg in self._aba_backlog.pop(r, []):
            out.outbound.extend(inst.handle(msg))

    def _apply(self, step: AcStep, out: ReplicaOutput) -> None:
        if step.action is Action.FILL_GAP:
            msg = ProtocolMessage(MessageKind.FILL_GAP, step.queue, self.id, step.request)
            out.outbound.append(Outbound(msg))
            out.notes.append(FillGapSent(step.round, step.queue, step.slot))
            return
        if step.action is Action.DELIVER:
            for m in step.outputs:
                self.output_chain = hashlib.sha256(self.output_chain + m.id).digest()
                self.output_count += 1
            out.delivered.extend(step.outputs)
            out.notes.append(
                BatchDelivered(
                    step.round,
                    step.queue,
                    step.slot,
                    step.value.digest,
                    len(step.outputs),
                    sum(1 for m in step.outputs if m.valid),
                )
            )


def start(replica: ReplicaId, cfg: Config, keys: ReplicaKeys) -> tuple[Replica, ReplicaOutput]:
    """Create a replica and begin its first round."""
    state = Replica(replica, cfg, keys)
    return state, state.start()
