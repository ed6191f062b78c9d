"""Verifiable consistent broadcast by echo with a threshold-signed proof.

The origin sends its batch to everyone, collects echo shares over
tag(id, digest) and broadcasts the combined proof. A proof-carrying FINAL
is self-authenticating, so it can also arrive inside a FILLER response.
"""

from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass

from heron_bft.constants import VCBC_TAG
from heron_bft.crypto.keys import ReplicaKeys
from heron_bft.crypto.threshold import (
    SignatureShare,
    ThresholdSignature,
    combine,
    sign_share,
    verify,
    verify_share,
)
from heron_bft.errors import ProtocolViolation, Unavailable
from heron_bft.models import (
    Batch,
    Config,
    MessageKind,
    Outbound,
    ProtocolMessage,
    ReplicaId,
    VcbcId,
    VerifiableMessage,
    quorums,
)

logger = logging.getLogger("heron-bft")


def tag(vid: VcbcId, payload_digest: bytes) -> bytes:
    """Signed string binding origin, priority and payload digest."""
    return struct.pack(">BIQ", VCBC_TAG, vid.origin, vid.priority) + payload_digest


@dataclass(frozen=True)
class VcbcDelivery:
    id: VcbcId
    payload: Batch


class VcbcInstance:
    def __init__(
        self,
        vid: VcbcId,
        replica: ReplicaId,
        cfg: Config,
        keys: ReplicaKeys,
        violations: Counter,
    ) -> None:
        self.id = vid
        self.replica = replica
        self._threshold = quorums(cfg).echo
        self._keys = keys
        self._violations = violations
        self.payload: Batch | None = None
        self.echo_shares: dict[ReplicaId, SignatureShare] = {}
        self.proof: ThresholdSignature | None = None
        self.delivered = False
        self._echoed = False
        self._final_sent = False

    @property
    def is_sender(self) -> bool:
        return self.id.origin == self.replica

    def _msg(self, kind: MessageKind, body) -> ProtocolMessage:
        return ProtocolMessage(kind, self.id, self.replica, body)

    def _violation(self, reason: str) -> None:
        self._violations[reason] += 1
        logger.debug(f"replica {self.replica} vcbc {self.id}: {reason}")

    def vcbc_broadcast(self, payload: Batch) -> list[Outbound]:
        if not self.is_sender:
            raise ProtocolViolation(f"replica {self.replica} is not the origin of {self.id}")
        if self.payload is not None:
            raise ProtocolViolation(f"{self.id} already broadcast")
        if not payload.entries:
            raise ProtocolViolation("empty batch")
        self.payload = payload
        return [Outbound(self._msg(MessageKind.VCBC_SEND, payload))]

    def on_send(self, sender: ReplicaId, payload: Batch) -> list[Outbound]:
        if sender != self.id.origin:
            self._violation("vcbc_send_not_origin")
            return []
        if not payload.entries:
            self._violation("vcbc_empty_batch")
            return []
        if self.payload is not None and self.payload.digest != payload.digest:
            self._violation("vcbc_equivocation")
            return []
        if self._echoed:
            return []
        if self.payload is None:
            self.payload = payload
        self._echoed = True
        share = sign_share(self._keys.vcbc, tag(self.id, payload.digest))
        return [Outbound(self._msg(MessageKind.VCBC_ECHO_SHARE, share), dest=self.id.origin)]

    def on_echo_share(self, sender: ReplicaId, share: SignatureShare) -> list[Outbound]:
        if not self.is_sender or self.payload is None:
            self._violation("vcbc_unexpected_echo")
            return []
        if self._final_sent or sender in self.echo_shares:
            return []
        message = tag(self.id, self.payload.digest)
        if share.signer != sender or not verify_share(
            self._keys.vcbc_public, sender, message, share
        ):
            self._violation("vcbc_bad_echo_share")
            return []
        self.echo_shares[sender] = share
        if len(self.echo_shares) < self._threshold:
            return []
        self.proof = combine(
            self._keys.vcbc_public, message, list(self.echo_shares.values()), verified=True
        )
        self._final_sent = True
        final = VerifiableMessage(self.id, self.payload, self.proof)
        return [Outbound(self._msg(MessageKind.VCBC_FINAL, final))]

    def on_final(self, m: VerifiableMessage) -> VcbcDelivery | None:
        """Deliver from a proof-carrying message; at most one delivery per instance."""
        if self.delivered:
            return None
        if m.id != self.id or not verify(
            self._keys.vcbc_public, tag(m.id, m.payload.digest), m.proof
        ):
            self._violation("vcbc_bad_proof")
            return None
        self.payload = m.payload
        self.proof = m.proof
        self.delivered = True
        return VcbcDelivery(self.id, m.payload)

    def make_verifiable_message(self) -> VerifiableMessage:
        if not self.delivered:
            raise Unavailable(f"{self.id} not delivered")
        return VerifiableMessage(self.id, self.payload, self.proof)
