"""Tests for asynchronous binary agreement."""

import random
import statistics
from collections import Counter

import pytest

from heron_bft.crypto.threshold import CoinName, coin_bit, combine, sign_share
from heron_bft.errors import ProtocolViolation
from heron_bft.models import (
    AbaConf,
    AbaFinish,
    AbaVote,
    MessageKind,
    ProtocolMessage,
)
from heron_bft.protocol.aba import AbaInstance


def _instance(cfg, keys, replica=0, aba_round=0):
    counter = Counter()
    return AbaInstance(aba_round, replica, cfg, keys.for_replica(replica), counter), counter


def _kinds(out):
    return [(o.msg.kind, o.msg.body) for o in out]


def _coin(keys, aba_round, k):
    name = CoinName(aba_round, k).encode()
    shares = [sign_share(keys.for_replica(i).coin, name) for i in (0, 1)]
    return coin_bit(combine(keys.coin.public_key, name, shares))


def _coin_share(keys, signer, aba_round, k):
    return sign_share(keys.for_replica(signer).coin, CoinName(aba_round, k).encode())


def _confirm(inst, values=frozenset({1})):
    """Drive round 0 of *inst* (proposed 1) through BVAL, AUX and CONF."""
    for sender in (0, 1, 2):
        inst.on_bval(sender, 0, 1)
    for sender in (0, 1, 2):
        inst.on_aux(sender, 0, 1)
    out = []
    for sender in (0, 1, 2):
        out += inst.on_conf(sender, 0, values)
    return out


class TestPropose:
    def test_propose_broadcasts_bval(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        out = inst.propose(1)
        assert _kinds(out) == [(MessageKind.ABA_BVAL, AbaVote(0, 1))]
        assert out[0].dest is None

    def test_propose_rejects_non_bit(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        with pytest.raises(ValueError):
            inst.propose(2)

    def test_double_propose(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(0)
        with pytest.raises(ProtocolViolation):
            inst.propose(1)


class TestPhases:
    def test_bval_relay_then_accept(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(0)
        assert inst.on_bval(1, 0, 1) == []
        assert _kinds(inst.on_bval(2, 0, 1)) == [(MessageKind.ABA_BVAL, AbaVote(0, 1))]
        out = inst.on_bval(3, 0, 1)
        assert _kinds(out) == [(MessageKind.ABA_AUX, AbaVote(0, 1))]
        assert inst.rounds[0].bin_values == {1}

    def test_duplicate_bval_ignored(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(0)
        inst.on_bval(1, 0, 1)
        assert inst.on_bval(1, 0, 1) == []
        assert inst.rounds[0].bval_senders[1] == {1}

    def test_aux_quorum_sends_conf(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(1)
        for sender in (0, 1, 2):
            inst.on_bval(sender, 0, 1)
        assert inst.on_aux(0, 0, 1) == []
        assert inst.on_aux(1, 0, 1) == []
        out = inst.on_aux(2, 0, 1)
        assert _kinds(out) == [(MessageKind.ABA_CONF, AbaConf(0, frozenset({1})))]

    def test_aux_mix_with_both_values(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(1)
        for sender in (0, 1, 2):
            inst.on_bval(sender, 0, 1)
        for sender in (0, 1, 2):
            inst.on_bval(sender, 0, 0)
        inst.on_aux(0, 0, 0)
        inst.on_aux(1, 0, 0)
        out = inst.on_aux(2, 0, 1)
        assert _kinds(out) == [(MessageKind.ABA_CONF, AbaConf(0, frozenset({0, 1})))]

    def test_aux_waits_for_bin_values(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(0)
        for sender in (0, 1, 2):
            assert inst.on_aux(sender, 0, 1) == []

    def test_conflicting_aux_counted(self, cfg4, keys4):
        inst, counter = _instance(cfg4, keys4)
        inst.propose(0)
        inst.on_aux(1, 0, 1)
        inst.on_aux(1, 0, 0)
        assert counter["aba_conflicting_aux"] == 1

    def test_conf_quorum_releases_coin_share(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(1)
        out = _confirm(inst)
        assert any(o.msg.kind == MessageKind.ABA_COIN_SHARE for o in out)

    def test_conf_outside_bin_values_held(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(1)
        out = _confirm(inst, frozenset({0, 1}))
        assert not any(o.msg.kind == MessageKind.ABA_COIN_SHARE for o in out)
        for sender in (1, 2, 3):
            out += inst.on_bval(sender, 0, 0)
        assert any(o.msg.kind == MessageKind.ABA_COIN_SHARE for o in out)

    def test_empty_conf_is_malformed(self, cfg4, keys4):
        inst, counter = _instance(cfg4, keys4)
        inst.propose(1)
        assert inst.on_conf(1, 0, frozenset()) == []
        assert counter["aba_malformed_conf"] == 1

    def test_coin_decides_or_advances(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(1)
        _confirm(inst)
        inst.on_coin_share(0, 0, _coin_share(keys4, 0, 0, 0))
        out = inst.on_coin_share(1, 0, _coin_share(keys4, 1, 0, 0))
        assert inst.rounds[0].coin == _coin(keys4, 0, 0)
        assert inst.internal_round == 1
        assert inst.estimate == 1
        if inst.rounds[0].coin == 1:
            assert inst.decision.value == 1
            assert inst.decision.decided_round == 0
            assert (MessageKind.ABA_FINISH, AbaFinish(1)) in _kinds(out)
        else:
            assert inst.decision is None
            assert (MessageKind.ABA_BVAL, AbaVote(1, 1)) in _kinds(out)

    def test_split_values_take_coin(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(1)
        for sender in (0, 1, 2):
            inst.on_bval(sender, 0, 1)
        for sender in (0, 1, 2):
            inst.on_bval(sender, 0, 0)
        inst.on_aux(0, 0, 0)
        inst.on_aux(1, 0, 0)
        inst.on_aux(2, 0, 1)
        for sender in (0, 1, 2):
            inst.on_conf(sender, 0, frozenset({0, 1}))
        inst.on_coin_share(0, 0, _coin_share(keys4, 0, 0, 0))
        inst.on_coin_share(1, 0, _coin_share(keys4, 1, 0, 0))
        assert inst.decision is None
        assert inst.estimate == _coin(keys4, 0, 0)

    def test_bad_coin_share_counted(self, cfg4, keys4):
        inst, counter = _instance(cfg4, keys4)
        inst.propose(1)
        assert inst.on_coin_share(1, 0, _coin_share(keys4, 1, 0, 5)) == []
        assert counter["aba_bad_coin_share"] == 1


class TestFinish:
    def test_amplify_then_halt(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        inst.propose(0)
        assert inst.on_finish(1, 1) == []
        out = inst.on_finish(2, 1)
        assert _kinds(out) == [(MessageKind.ABA_FINISH, AbaFinish(1))]
        assert not inst.halted
        inst.on_finish(3, 1)
        assert inst.halted
        assert inst.decision.value == 1
        assert inst.pop_decision().value == 1
        assert inst.pop_decision() is None

    def test_conflicting_finish_counted(self, cfg4, keys4):
        inst, counter = _instance(cfg4, keys4)
        inst.on_finish(1, 0)
        inst.on_finish(1, 1)
        assert counter["aba_conflicting_finish"] == 1

    def test_propose_after_decision(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        for sender in (1, 2, 3):
            inst.on_finish(sender, 1)
        with pytest.raises(ProtocolViolation):
            inst.propose(1)


class TestBuffering:
    def test_future_round_buffered_until_reached(self, cfg4, keys4):
        inst, counter = _instance(cfg4, keys4)
        msg = ProtocolMessage(MessageKind.ABA_BVAL, 0, 1, AbaVote(2, 1))
        assert inst.handle(msg) == []
        assert 2 in inst._buffer
        assert not counter

    def test_messages_before_propose_buffered(self, cfg4, keys4):
        inst, _ = _instance(cfg4, keys4)
        for sender in (1, 2):
            inst.handle(ProtocolMessage(MessageKind.ABA_BVAL, 0, sender, AbaVote(0, 1)))
        out = inst.propose(0)
        assert (MessageKind.ABA_BVAL, AbaVote(0, 1)) in _kinds(out)

    def test_lookahead_overflow(self, cfg4, keys4):
        inst, counter = _instance(cfg4, keys4)
        inst.propose(0)
        inst.handle(ProtocolMessage(MessageKind.ABA_BVAL, 0, 1, AbaVote(50, 1)))
        assert counter["aba_round_overflow"] == 1

    def test_per_sender_cap(self, cfg4, keys4):
        inst, counter = _instance(cfg4, keys4)
        inst.propose(0)
        for _ in range(6):
            inst.handle(ProtocolMessage(MessageKind.ABA_AUX, 0, 1, AbaVote(3, 1)))
        assert counter["aba_buffer_overflow"] == 1


_CONF_SETS = [frozenset({0}), frozenset({1}), frozenset({0, 1})]


def _scramble(msg, rng):
    """Replace the vote carried by *msg* with a random one; coin shares pass through."""
    body = msg.body
    if isinstance(body, AbaVote):
        body = AbaVote(body.internal_round, rng.randrange(2))
    elif isinstance(body, AbaConf):
        body = AbaConf(body.internal_round, rng.choice(_CONF_SETS))
    elif isinstance(body, AbaFinish):
        body = AbaFinish(rng.randrange(2))
    return ProtocolMessage(msg.kind, msg.instance, msg.sender, body)


def _run_instances(cfg, keys, proposals, seed, aba_round=0, byzantine=()):
    """Deliver every broadcast in random order until all correct instances halt.

    Replicas in *byzantine* send an independently scrambled vote to each peer.
    """
    rng = random.Random(seed)
    correct = [i for i in cfg.replicas if i not in byzantine]
    counters = [Counter() for _ in cfg.replicas]
    insts = [
        AbaInstance(aba_round, i, cfg, keys.for_replica(i), counters[i]) for i in cfg.replicas
    ]
    pool = []

    def send(src, out):
        for o in out:
            dests = cfg.replicas if o.dest is None else [o.dest]
            if src in byzantine:
                pool.extend((d, _scramble(o.msg, rng)) for d in dests)
            else:
                pool.extend((d, o.msg) for d in dests)

    for i, b in enumerate(proposals):
        send(i, insts[i].propose(b))
    while pool and not all(insts[i].halted for i in correct):
        dst, msg = pool.pop(rng.randrange(len(pool)))
        send(dst, insts[dst].handle(msg))
    return insts, counters


class TestAgreement:
    @pytest.mark.parametrize("b", [0, 1])
    def test_unanimous_proposal_decides_it(self, cfg4, keys4, b):
        for seed in range(5):
            insts, counters = _run_instances(cfg4, keys4, [b] * 4, seed)
            assert {inst.decision.value for inst in insts} == {b}
            assert not any(counters)

    def test_mixed_proposals_agree(self, cfg4, keys4):
        rounds = []
        for seed in range(10):
            insts, _ = _run_instances(cfg4, keys4, [0, 1, 0, 1], seed, aba_round=seed)
            assert all(inst.decision is not None for inst in insts)
            assert len({inst.decision.value for inst in insts}) == 1
            rounds.extend(inst.decision.decided_round + 1 for inst in insts)
        assert max(rounds) <= 40

    @pytest.mark.slow
    @pytest.mark.parametrize("n", [4, 7])
    def test_byzantine_votes_cannot_split_correct_replicas(self, n, cfg4, keys4, cfg7, keys7):
        cfg, keys = (cfg4, keys4) if n == 4 else (cfg7, keys7)
        byzantine = set(range(n - cfg.f, n))
        rounds = []
        for seed in range(500):
            rng = random.Random(seed)
            proposals = [rng.randrange(2) for _ in cfg.replicas]
            insts, counters = _run_instances(
                cfg, keys, proposals, seed, aba_round=seed, byzantine=byzantine
            )
            correct = [insts[i] for i in cfg.replicas if i not in byzantine]
            assert all(inst.halted and inst.decision is not None for inst in correct), seed
            decided = {inst.decision.value for inst in correct}
            assert len(decided) == 1, seed
            honest = {proposals[i] for i in cfg.replicas if i not in byzantine}
            if len(honest) == 1:
                assert decided == honest, seed
            rounds.extend(inst.decision.decided_round + 1 for inst in correct)
        assert statistics.fmean(rounds) <= 4
        assert max(rounds) <= 40
