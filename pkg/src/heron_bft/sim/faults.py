"""Static fault models: crash, silent, invalid proposals, equivocation and fuzzing."""

from __future__ import annotations

import dataclasses
import enum
import random
from dataclasses import dataclass

from heron_bft.codec import encode
from heron_bft.constants import INVALID_TX_MARKER
from heron_bft.crypto.threshold import SignatureShare, ThresholdSignature
from heron_bft.errors import ConfigError
from heron_bft.models import (
    AbaCoinShare,
    AbaConf,
    AbaFinish,
    AbaVote,
    Batch,
    ClientMessage,
    Config,
    FillerResponse,
    FillGapRequest,
    MessageKind,
    Outbound,
    ProtocolMessage,
    ReplicaId,
    VerifiableMessage,
)
from heron_bft.protocol.replica import ClientSubmit, Replica, ReplicaEvent, ReplicaOutput


class FaultBehavior(str, enum.Enum):
    NONE = "none"
    CRASH = "crash"
    SILENT = "silent"
    INVALID_PROPOSER = "invalid-proposer"
    EQUIVOCATOR = "equivocator"
    FUZZER = "fuzzer"


@dataclass(frozen=True)
class FaultModel:
    behavior: FaultBehavior = FaultBehavior.NONE
    faulty: frozenset[ReplicaId] = frozenset()
    seed: int = 0
    crash_step: int = 0

    def is_correct(self, replica: ReplicaId) -> bool:
        return replica not in self.faulty

    @property
    def spec(self) -> str:
        if self.behavior is FaultBehavior.NONE:
            return "none"
        text = f"{self.behavior.value}:{len(self.faulty)}"
        if self.behavior is FaultBehavior.CRASH and self.crash_step:
            text += f"@{self.crash_step}"
        return text

    @classmethod
    def parse(cls, text: str, cfg: Config, seed: int = 0) -> FaultModel:
        """Parse ``KIND[:COUNT][@CRASH_STEP]``; COUNT defaults to f, faulty ids are the highest.

        >>> FaultModel.parse("crash:1", Config(4, 1)).faulty
        frozenset({3})
        """
        kind, _, rest = text.strip().partition(":")
        count_text, _, step_text = rest.partition("@")
        try:
            behavior = FaultBehavior(kind)
        except ValueError as e:
            raise ConfigError(f"unknown fault behavior {kind!r}") from e
        if behavior is FaultBehavior.NONE:
            return cls()
        try:
            count = int(count_text) if count_text else cfg.f
            crash_step = int(step_text) if step_text else 0
        except ValueError as e:
            raise ConfigError(f"bad fault spec {text!r}") from e
        if not 0 <= count <= cfg.f:
            raise ConfigError(f"{count} faulty replicas exceeds f={cfg.f}")
        if step_text and behavior is not FaultBehavior.CRASH:
            raise ConfigError("a crash step only applies to crash faults")
        faulty = frozenset(range(cfg.n - count, cfg.n))
        return cls(behavior, faulty, seed, crash_step)


# --- Behaviors ---

def invalidate(m: ClientMessage) -> ClientMessage:
    return ClientMessage(INVALID_TX_MARKER + m.payload)


def _conflicting(batch: Batch) -> Batch:
    return Batch(tuple(ClientMessage(b"~" + m.payload) for m in batch.entries))


def _equivocate(out: ReplicaOutput, n: int) -> None:
    rewritten: list[Outbound] = []
    for o in out.outbound:
        if o.msg.kind != MessageKind.VCBC_SEND or o.dest is not None:
            rewritten.append(o)
            continue
        alt = dataclasses.replace(o.msg, body=_conflicting(o.msg.body))
        for dest in range(n):
            rewritten.append(Outbound(o.msg if dest < (n + 1) // 2 else alt, dest=dest))
    out.outbound = rewritten


def _corrupt_bytes(data: bytes, rng: random.Random) -> bytes:
    buf = bytearray(data)
    for _ in range(rng.randint(1, 3)):
        i = rng.randrange(len(buf))
        buf[i] ^= 1 << rng.randrange(8)
    if rng.random() < 0.25:
        del buf[rng.randrange(len(buf)):]
    return bytes(buf)


def _flip_sig(value: bytes, rng: random.Random) -> bytes:
    if not value:
        return b"\x01"
    return _corrupt_bytes(value, rng)


def _mutate_body(msg: ProtocolMessage, n: int, rng: random.Random) -> ProtocolMessage:
    body = msg.body
    kind = msg.kind
    if kind == MessageKind.VCBC_SEND:
        body = _conflicting(body)
    elif kind == MessageKind.VCBC_ECHO_SHARE:
        body = SignatureShare(body.signer, _flip_sig(body.value, rng))
    elif kind == MessageKind.VCBC_FINAL:
        proof = ThresholdSignature(_flip_sig(body.proof.value, rng))
        body = VerifiableMessage(body.id, body.payload, proof)
    elif kind in (MessageKind.ABA_BVAL, MessageKind.ABA_AUX):
        if rng.random() < 0.5:
            body = AbaVote(body.internal_round, 1 - body.value)
        else:
            body = AbaVote(body.internal_round + rng.randint(1, 3), body.value)
    elif kind == MessageKind.ABA_CONF:
        values = rng.choice([frozenset({0}), frozenset({1}), frozenset({0, 1})])
        body = AbaConf(body.internal_round, values)
    elif kind == MessageKind.ABA_COIN_SHARE:
        share = SignatureShare(body.share.signer, rng.randbytes(48))
        body = AbaCoinShare(body.internal_round, share)
    elif kind == MessageKind.ABA_FINISH:
        body = AbaFinish(1 - body.value)
    elif kind == MessageKind.FILL_GAP:
        body = FillGapRequest(body.queue, rng.randrange(8))
    else:
        entries = list(reversed(body.entries))
        if entries:
            e = entries[0]
            proof = ThresholdSignature(_flip_sig(e.proof.value, rng))
            entries[0] = VerifiableMessage(e.id, e.payload, proof)
        body = FillerResponse(tuple(entries))
    if rng.random() < 0.1:
        return dataclasses.replace(msg, body=body, sender=rng.randrange(n))
    return dataclasses.replace(msg, body=body)


def _fuzz(out: ReplicaOutput, n: int, rng: random.Random) -> None:
    mutated: list[Outbound] = []
    for o in out.outbound:
        roll = rng.random()
        if roll < 1 / 3:
            mutated.append(o)
        elif roll < 2 / 3:
            mutated.append(Outbound(_mutate_body(o.msg, n, rng), dest=o.dest))
        else:
            mutated.append(Outbound(o.msg, dest=o.dest, raw=_corrupt_bytes(encode(o.msg), rng)))
    out.outbound = mutated


def apply_fault_behavior(
    model: FaultModel,
    replica: Replica,
    event: ReplicaEvent,
    step: int,
    rng: random.Random,
) -> ReplicaOutput:
    """Run *event* through a faulty replica according to its behavior."""
    behavior = model.behavior
    if behavior is FaultBehavior.SILENT:
        return ReplicaOutput()
    if behavior is FaultBehavior.CRASH and step >= model.crash_step:
        return ReplicaOutput()
    if behavior is FaultBehavior.INVALID_PROPOSER and isinstance(event, ClientSubmit):
        event = ClientSubmit(invalidate(event.message))
    out = replica.handle(event)
    if behavior is FaultBehavior.EQUIVOCATOR:
        _equivocate(out, replica.cfg.n)
    elif behavior is FaultBehavior.FUZZER:
        _fuzz(out, replica.cfg.n, rng)
    return out
