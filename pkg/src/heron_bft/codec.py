"""Canonical binary encoding of ProtocolMessage.

Layout: format tag (u8) | kind (u8) | instance | sender (u32) | body.
Field order follows the model definitions; integers are big-endian and
variable-size fields are u32 length-prefixed.
"""

from __future__ import annotations

from collections.abc import Callable

from heron_bft.constants import FORMAT_TAG
from heron_bft.crypto.threshold import SignatureShare, ThresholdSignature
from heron_bft.errors import ParseError
from heron_bft.models import (
    AbaCoinShare,
    AbaConf,
    AbaFinish,
    AbaVote,
    Batch,
    ClientMessage,
    FillerResponse,
    FillGapRequest,
    MessageKind,
    ProtocolMessage,
    VcbcId,
    VerifiableMessage,
)
from heron_bft.wire import Reader, Writer


# --- Body encoders ---

def write_batch(w: Writer, batch: Batch) -> None:
    w.u32(len(batch.entries))
    for m in batch.entries:
        w.blob(m.payload)


def read_batch(r: Reader) -> Batch:
    count = r.u32()
    if count > r.remaining // 4:
        raise ParseError(f"batch claims {count} entries")
    try:
        return Batch(tuple(ClientMessage(r.blob()) for _ in range(count)))
    except ValueError as e:
        raise ParseError(str(e)) from e


def _write_share(w: Writer, share: SignatureShare) -> None:
    w.u32(share.signer).blob(share.value)


def _read_share(r: Reader) -> SignatureShare:
    return SignatureShare(r.u32(), r.blob())


def _write_vcbc_id(w: Writer, vid: VcbcId) -> None:
    w.u32(vid.origin).u64(vid.priority)


def _read_vcbc_id(r: Reader) -> VcbcId:
    return VcbcId(r.u32(), r.u64())


def write_verifiable(w: Writer, m: VerifiableMessage) -> None:
    _write_vcbc_id(w, m.id)
    write_batch(w, m.payload)
    w.blob(m.proof.value)


def read_verifiable(r: Reader) -> VerifiableMessage:
    return VerifiableMessage(_read_vcbc_id(r), read_batch(r), ThresholdSignature(r.blob()))


def _read_bit(r: Reader) -> int:
    value = r.u8()
    if value > 1:
        raise ParseError(f"not a bit: {value}")
    return value


def _write_vote(w: Writer, body: AbaVote) -> None:
    w.u64(body.internal_round).u8(body.value)


def _read_vote(r: Reader) -> AbaVote:
    return AbaVote(r.u64(), _read_bit(r))


def _write_conf(w: Writer, body: AbaConf) -> None:
    w.u64(body.internal_round).u8(sum(1 << v for v in body.values))


def _read_conf(r: Reader) -> AbaConf:
    internal_round = r.u64()
    mask = r.u8()
    if mask > 3:
        raise ParseError(f"bad value mask: {mask}")
    return AbaConf(internal_round, frozenset(v for v in (0, 1) if mask & (1 << v)))


def _write_coin(w: Writer, body: AbaCoinShare) -> None:
    w.u64(body.internal_round)
    _write_share(w, body.share)


def _read_coin(r: Reader) -> AbaCoinShare:
    return AbaCoinShare(r.u64(), _read_share(r))


def _write_filler(w: Writer, body: FillerResponse) -> None:
    w.u32(len(body.entries))
    for entry in body.entries:
        write_verifiable(w, entry)


def _read_filler(r: Reader) -> FillerResponse:
    count = r.u32()
    if count > r.remaining:
        raise ParseError(f"filler claims {count} entries")
    return FillerResponse(tuple(read_verifiable(r) for _ in range(count)))


_BODY_CODECS: dict[MessageKind, tuple[Callable, Callable]] = {
    MessageKind.VCBC_SEND: (write_batch, read_batch),
    MessageKind.VCBC_ECHO_SHARE: (_write_share, _read_share),
    MessageKind.VCBC_FINAL: (write_verifiable, read_verifiable),
    MessageKind.ABA_BVAL: (_write_vote, _read_vote),
    MessageKind.ABA_AUX: (_write_vote, _read_vote),
    MessageKind.ABA_CONF: (_write_conf, _read_conf),
    MessageKind.ABA_COIN_SHARE: (_write_coin, _read_coin),
    MessageKind.ABA_FINISH: (lambda w, b: w.u8(b.value), lambda r: AbaFinish(_read_bit(r))),
    MessageKind.FILL_GAP: (
        lambda w, b: w.u32(b.queue).u64(b.slot),
        lambda r: FillGapRequest(r.u32(), r.u64()),
    ),
    MessageKind.FILLER: (_write_filler, _read_filler),
}


# --- Envelope ---

def encode(msg: ProtocolMessage) -> bytes:
    w = Writer().u8(FORMAT_TAG).u8(msg.kind)
    family = msg.kind.family
    if family == "vcbc":
        _write_vcbc_id(w, msg.instance)
    elif family == "aba":
        w.u64(msg.instance)
    else:
        w.u32(msg.instance)
    w.u32(msg.sender)
    _BODY_CODECS[msg.kind][0](w, msg.body)
    return w.getvalue()


def decode(data: bytes) -> ProtocolMessage:
    """Parse bytes produced by encode; anything else raises ParseError."""
    r = Reader(data)
    tag = r.u8()
    if tag != FORMAT_TAG:
        raise ParseError(f"unknown format tag {tag}")
    try:
        kind = MessageKind(r.u8())
    except ValueError as e:
        raise ParseError(str(e)) from e
    family = kind.family
    if family == "vcbc":
        instance = _read_vcbc_id(r)
    elif family == "aba":
        instance = r.u64()
    else:
        instance = r.u32()
    sender = r.u32()
    body = _BODY_CODECS[kind][1](r)
    r.expect_end()
    return ProtocolMessage(kind, instance, sender, body)
