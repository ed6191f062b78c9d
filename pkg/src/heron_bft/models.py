"""Core data models: configuration, client messages, batches and the protocol envelope."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple, Union

from heron_bft.constants import DEFAULT_BATCH_SIZE, DEFAULT_TX_SIZE, INVALID_TX_MARKER
from heron_bft.crypto.threshold import SignatureShare, ThresholdSignature
from heron_bft.errors import ConfigError

ReplicaId = int


@dataclass(frozen=True)
class Config:
    n: int
    f: int
    batch_size: int = DEFAULT_BATCH_SIZE
    tx_size: int = DEFAULT_TX_SIZE

    def __post_init__(self) -> None:
        if self.f < 0:
            raise ConfigError(f"f must be non-negative, got {self.f}")
        if self.n < 3 * self.f + 1:
            raise ConfigError(f"n={self.n} must be at least 3f+1={3 * self.f + 1}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.tx_size < 1:
            raise ConfigError(f"tx_size must be positive, got {self.tx_size}")

    @classmethod
    def for_n(cls, n: int, **kwargs: int) -> Config:
        """Configuration tolerating the maximum f = floor((n-1)/3)."""
        return cls(n=n, f=(n - 1) // 3, **kwargs)

    @property
    def replicas(self) -> range:
        return range(self.n)


class Quorums(NamedTuple):
    weak: int
    strong: int
    quorum: int
    echo: int


def quorums(cfg: Config) -> Quorums:
    """Weak (f+1), strong (2f+1) and n-f quorum sizes plus the echo threshold.

    The echo threshold ceil((n+f+1)/2) equals 2f+1 when n = 3f+1 and keeps
    any two echo quorums intersecting in a correct replica for larger n.
    """
    return Quorums(
        weak=cfg.f + 1,
        strong=2 * cfg.f + 1,
        quorum=cfg.n - cfg.f,
        echo=(cfg.n + cfg.f + 2) // 2,
    )


def queue_map(r: int, n: int) -> ReplicaId:
    """Round-robin queue selection F(r)."""
    if r < 0:
        raise ValueError(f"round must be non-negative, got {r}")
    return r % n


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# --- Client messages and batches ---

@dataclass(frozen=True)
class ClientMessage:
    payload: bytes = field(compare=False, repr=False)
    id: bytes = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", digest(self.payload))

    @property
    def valid(self) -> bool:
        """Transactions marked invalid consume ordering capacity but not goodput."""
        return not self.payload.startswith(INVALID_TX_MARKER)


@dataclass(frozen=True)
class Batch:
    entries: tuple[ClientMessage, ...]
    digest: bytes = field(init=False, repr=False)

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if len({m.id for m in entries}) != len(entries):
            raise ValueError("batch entries must be pairwise distinct")
        h = hashlib.sha256(len(entries).to_bytes(4, "big"))
        for m in entries:
            h.update(len(m.payload).to_bytes(4, "big"))
            h.update(m.payload)
        object.__setattr__(self, "digest", h.digest())

    def __len__(self) -> int:
        return len(self.entries)


# --- Protocol envelope ---

class MessageKind(enum.IntEnum):
    VCBC_SEND = 1
    VCBC_ECHO_SHARE = 2
    VCBC_FINAL = 3
    ABA_BVAL = 4
    ABA_AUX = 5
    ABA_CONF = 6
    ABA_COIN_SHARE = 7
    ABA_FINISH = 8
    FILL_GAP = 9
    FILLER = 10

    @property
    def family(self) -> str:
        if self <= MessageKind.VCBC_FINAL:
            return "vcbc"
        if self <= MessageKind.ABA_FINISH:
            return "aba"
        return "recovery"


@dataclass(frozen=True, order=True)
class VcbcId:
    origin: ReplicaId
    priority: int


@dataclass(frozen=True)
class VerifiableMessage:
    """Self-authenticating VCBC output: any correct replica can deliver from it alone."""

    id: VcbcId
    payload: Batch
    proof: ThresholdSignature


@dataclass(frozen=True)
class AbaVote:
    internal_round: int
    value: int


@dataclass(frozen=True)
class AbaConf:
    internal_round: int
    values: frozenset[int]


@dataclass(frozen=True)
class AbaCoinShare:
    internal_round: int
    share: SignatureShare


@dataclass(frozen=True)
class AbaFinish:
    value: int


@dataclass(frozen=True)
class FillGapRequest:
    queue: ReplicaId
    slot: int


@dataclass(frozen=True)
class FillerResponse:
    entries: tuple[VerifiableMessage, ...]


Body = Union[
    Batch,
    SignatureShare,
    VerifiableMessage,
    AbaVote,
    AbaConf,
    AbaCoinShare,
    AbaFinish,
    FillGapRequest,
    FillerResponse,
]

# VCBC instances are addressed by VcbcId, ABA by round, recovery by queue id.
Instance = Union[VcbcId, int]


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    instance: Instance
    sender: ReplicaId
    body: Body


@dataclass(frozen=True)
class Outbound:
    """A message leaving a replica; dest None means broadcast to all n (self included).

    raw carries pre-encoded bytes when a faulty replica corrupts its traffic.
    """

    msg: ProtocolMessage
    dest: ReplicaId | None = None
    raw: bytes | None = None


# --- Replica notes (protocol events surfaced for traces and metrics) ---

@dataclass(frozen=True)
class VcbcProposed:
    priority: int
    digest: bytes


@dataclass(frozen=True)
class VcbcDelivered:
    origin: ReplicaId
    priority: int
    digest: bytes


@dataclass(frozen=True)
class RoundStarted:
    round: int
    queue: ReplicaId
    head: int
    head_digest: bytes  # b"" when the head slot is empty
    proposal: int
    delivered_count: int
    output_chain: bytes  # hash chain over the output stream at round entry


@dataclass(frozen=True)
class AbaDecided:
    round: int
    value: int
    internal_round: int


@dataclass(frozen=True)
class BatchDelivered:
    round: int
    queue: ReplicaId
    slot: int
    digest: bytes
    new_entries: int
    valid_entries: int  # new entries that count as goodput


@dataclass(frozen=True)
class FillGapSent:
    round: int
    queue: ReplicaId
    slot: int


Note = Union[VcbcProposed, VcbcDelivered, RoundStarted, AbaDecided, BatchDelivered, FillGapSent]
NOTE_TYPES: tuple[type, ...] = (
    VcbcProposed,
    VcbcDelivered,
    RoundStarted,
    AbaDecided,
    BatchDelivered,
    FillGapSent,
)
