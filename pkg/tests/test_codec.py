"""Tests for the canonical message encoding."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from heron_bft.codec import decode, encode
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

u32 = st.integers(min_value=0, max_value=2**32 - 1)
u64 = st.integers(min_value=0, max_value=2**64 - 1)
bit = st.integers(min_value=0, max_value=1)

batches = st.lists(st.binary(min_size=1, max_size=40), min_size=1, max_size=5, unique=True).map(
    lambda ps: Batch(tuple(ClientMessage(p) for p in ps))
)
vcbc_ids = st.builds(VcbcId, u32, u64)
verifiables = st.builds(
    VerifiableMessage, vcbc_ids, batches, st.builds(ThresholdSignature, st.binary(max_size=64))
)
shares = st.builds(SignatureShare, u32, st.binary(max_size=64))


def _msg(kind, instance, body):
    return st.builds(ProtocolMessage, st.just(kind), instance, u32, body)


messages = st.one_of(
    _msg(MessageKind.VCBC_SEND, vcbc_ids, batches),
    _msg(MessageKind.VCBC_ECHO_SHARE, vcbc_ids, shares),
    _msg(MessageKind.VCBC_FINAL, vcbc_ids, verifiables),
    _msg(MessageKind.ABA_BVAL, u64, st.builds(AbaVote, u64, bit)),
    _msg(MessageKind.ABA_AUX, u64, st.builds(AbaVote, u64, bit)),
    _msg(
        MessageKind.ABA_CONF,
        u64,
        st.builds(AbaConf, u64, st.frozensets(bit, min_size=1)),
    ),
    _msg(MessageKind.ABA_COIN_SHARE, u64, st.builds(AbaCoinShare, u64, shares)),
    _msg(MessageKind.ABA_FINISH, u64, st.builds(AbaFinish, bit)),
    _msg(MessageKind.FILL_GAP, u32, st.builds(FillGapRequest, u32, u64)),
    _msg(
        MessageKind.FILLER,
        u32,
        st.builds(FillerResponse, st.lists(verifiables, max_size=3).map(tuple)),
    ),
)


@given(messages)
def test_decode_inverts_encode(msg):
    assert decode(encode(msg)) == msg


@given(st.binary(max_size=200))
def test_decode_arbitrary_bytes_never_crashes(data):
    try:
        msg = decode(data)
    except ParseError:
        return
    assert encode(msg) == data


@given(messages, st.data())
def test_truncation_is_rejected(msg, data):
    encoded = encode(msg)
    cut = data.draw(st.integers(min_value=0, max_value=len(encoded) - 1))
    with pytest.raises(ParseError):
        decode(encoded[:cut])


def test_send_with_single_entry_round_trips():
    msg = ProtocolMessage(
        MessageKind.VCBC_SEND, VcbcId(2, 0), 2, Batch((ClientMessage(b"x" * 250),))
    )
    assert decode(encode(msg)) == msg


def test_decode_empty():
    with pytest.raises(ParseError):
        decode(b"")


def test_encoding_is_deterministic():
    msg = ProtocolMessage(MessageKind.FILL_GAP, 1, 3, FillGapRequest(1, 4))
    assert encode(msg) == encode(ProtocolMessage(MessageKind.FILL_GAP, 1, 3, FillGapRequest(1, 4)))


def test_unknown_format_tag():
    data = bytearray(encode(ProtocolMessage(MessageKind.ABA_FINISH, 0, 0, AbaFinish(1))))
    data[0] = 99
    with pytest.raises(ParseError):
        decode(bytes(data))


def test_trailing_bytes_rejected():
    data = encode(ProtocolMessage(MessageKind.ABA_FINISH, 0, 0, AbaFinish(1)))
    with pytest.raises(ParseError):
        decode(data + b"\x00")


def test_non_bit_vote_rejected():
    data = bytearray(encode(ProtocolMessage(MessageKind.ABA_BVAL, 0, 0, AbaVote(0, 1))))
    data[-1] = 2
    with pytest.raises(ParseError):
        decode(bytes(data))


def test_duplicate_batch_entries_rejected():
    body = ProtocolMessage(
        MessageKind.VCBC_SEND, VcbcId(0, 0), 0, Batch((ClientMessage(b"a"), ClientMessage(b"b")))
    )
    data = encode(body).replace(b"b", b"a")
    with pytest.raises(ParseError):
        decode(data)
