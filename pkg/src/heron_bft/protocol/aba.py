"""Asynchronous binary agreement with a threshold-signature common coin.

Each internal round runs four phases:

  1. BVAL: relay a bit seen from f+1 senders, accept it into bin_values at 2f+1.
  2. AUX:  announce the first accepted bit, wait for n-f AUX inside bin_values.
  3. CONF: announce bin_values, wait for n-f CONF sets inside bin_values.
  4. COIN: release a coin share, combine f+1 shares into the round's coin.

A round whose confirmed values are the single bit equal to the coin decides
it. Deciders announce FINISH; f+1 FINISH(b) are amplified and 2f+1 halt the
instance.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from heron_bft.constants import ABA_LOOKAHEAD_ROUNDS, ABA_MAX_BUFFERED_PER_SENDER
from heron_bft.crypto.keys import ReplicaKeys
from heron_bft.crypto.threshold import (
    CoinName,
    SignatureShare,
    coin_bit,
    combine,
    sign_share,
    verify_share,
)
from heron_bft.errors import ProtocolViolation
from heron_bft.models import (
    AbaCoinShare,
    AbaConf,
    AbaFinish,
    AbaVote,
    Config,
    MessageKind,
    Outbound,
    ProtocolMessage,
    ReplicaId,
    quorums,
)

logger = logging.getLogger("heron-bft")


@dataclass
class AbaRoundState:
    bval_senders: dict[int, set[ReplicaId]] = field(default_factory=lambda: {0: set(), 1: set()})
    sent_bval: set[int] = field(default_factory=set)
    bin_values: set[int] = field(default_factory=set)
    aux_senders: dict[ReplicaId, int] = field(default_factory=dict)
    conf_senders: dict[ReplicaId, frozenset[int]] = field(default_factory=dict)
    coin_shares: dict[ReplicaId, SignatureShare] = field(default_factory=dict)
    coin: int | None = None
    values: frozenset[int] | None = None
    aux_sent: bool = False
    conf_sent: bool = False
    share_sent: bool = False


@dataclass(frozen=True)
class AbaDecision:
    value: int
    decided_round: int


class AbaInstance:
    def __init__(
        self,
        aba_round: int,
        replica: ReplicaId,
        cfg: Config,
        keys: ReplicaKeys,
        violations: Counter,
        lookahead: int = ABA_LOOKAHEAD_ROUNDS,
    ) -> None:
        self.round = aba_round
        self.replica = replica
        self._q = quorums(cfg)
        self._keys = keys
        self._violations = violations
        self._lookahead = lookahead
        self.internal_round = 0
        self.estimate: int | None = None
        self.proposed = False
        self.decision: AbaDecision | None = None
        self.halted = False
        self.rounds: dict[int, AbaRoundState] = {}
        self.finish_senders: dict[ReplicaId, int] = {}
        self._finish_sent = False
        self._decision_reported = False
        self._buffer: dict[int, list[ProtocolMessage]] = {}
        self._buffered_per_sender: Counter = Counter()

    # --- helpers ---

    def _state(self, k: int) -> AbaRoundState:
        st = self.rounds.get(k)
        if st is None:
            st = self.rounds[k] = AbaRoundState()
        return st

    def _broadcast(self, kind: MessageKind, body) -> Outbound:
        return Outbound(ProtocolMessage(kind, self.round, self.replica, body))

    def _violation(self, reason: str) -> None:
        self._violations[reason] += 1
        logger.debug(f"replica {self.replica} aba {self.round}: {reason}")

    def _coin_name(self, k: int) -> bytes:
        return CoinName(self.round, k).encode()

    def pop_decision(self) -> AbaDecision | None:
        """Return the decision the first time it is available, None afterwards."""
        if self.decision is None or self._decision_reported:
            return None
        self._decision_reported = True
        return self.decision

    # --- entry points ---

    def propose(self, b: int) -> list[Outbound]:
        if b not in (0, 1):
            raise ValueError(f"proposal must be 0 or 1, got {b!r}")
        if self.proposed or self.decision is not None or self.halted:
            raise ProtocolViolation(f"ABA {self.round} already proposed or decided")
        self.proposed = True
        self.estimate = b
        return self._enter_round()

    def handle(self, msg: ProtocolMessage) -> list[Outbound]:
        """Route one ABA message, buffering those for rounds not yet reached."""
        if self.halted:
            return []
        if msg.kind == MessageKind.ABA_FINISH:
            return self.on_finish(msg.sender, msg.body.value)
        k = msg.body.internal_round
        if not self.proposed or k > self.internal_round:
            self._hold(k, msg)
            return []
        return self._dispatch(msg)

    def _hold(self, k: int, msg: ProtocolMessage) -> None:
        if k > self.internal_round + self._lookahead:
            self._violation("aba_round_overflow")
            return
        key = (k, msg.sender)
        if self._buffered_per_sender[key] >= ABA_MAX_BUFFERED_PER_SENDER:
            self._violation("aba_buffer_overflow")
            return
        self._buffered_per_sender[key] += 1
        self._buffer.setdefault(k, []).append(msg)

    def _dispatch(self, msg: ProtocolMessage) -> list[Outbound]:
        body = msg.body
        if msg.kind == MessageKind.ABA_BVAL:
            return self.on_bval(msg.sender, body.internal_round, body.value)
        if msg.kind == MessageKind.ABA_AUX:
            return self.on_aux(msg.sender, body.internal_round, body.value)
        if msg.kind == MessageKind.ABA_CONF:
            return self.on_conf(msg.sender, body.internal_round, body.values)
        return self.on_coin_share(msg.sender, body.internal_round, body.share)

    def _enter_round(self) -> list[Outbound]:
        k = self.internal_round
        st = self._state(k)
        out: list[Outbound] = []
        if self.estimate not in st.sent_bval:
            st.sent_bval.add(self.estimate)
            out.append(self._broadcast(MessageKind.ABA_BVAL, AbaVote(k, self.estimate)))
        for msg in self._buffer.pop(k, []):
            if self.halted:
                break
            out.extend(self._dispatch(msg))
        return out

    # --- phase handlers ---

    def on_bval(self, sender: ReplicaId, k: int, b: int) -> list[Outbound]:
        st = self._state(k)
        if sender in st.bval_senders[b]:
            return []
        st.bval_senders[b].add(sender)
        count = len(st.bval_senders[b])
        out: list[Outbound] = []
        if count >= self._q.weak and b not in st.sent_bval:
            st.sent_bval.add(b)
            out.append(self._broadcast(MessageKind.ABA_BVAL, AbaVote(k, b)))
        if count >= self._q.strong and b not in st.bin_values:
            st.bin_values.add(b)
            if not st.aux_sent:
                st.aux_sent = True
                out.append(self._broadcast(MessageKind.ABA_AUX, AbaVote(k, b)))
            out.extend(self._progress(k))
        return out

    def on_aux(self, sender: ReplicaId, k: int, b: int) -> list[Outbound]:
        st = self._state(k)
        previous = st.aux_senders.get(sender)
        if previous is not None:
            if previous != b:
                self._violation("aba_conflicting_aux")
            return []
        st.aux_senders[sender] = b
        return self._progress(k)

    def on_conf(self, sender: ReplicaId, k: int, values: frozenset[int]) -> list[Outbound]:
        if not values or not values <= {0, 1}:
            self._violation("aba_malformed_conf")
            return []
        st = self._state(k)
        previous = st.conf_senders.get(sender)
        if previous is not None:
            if previous != values:
                self._violation("aba_conflicting_conf")
            return []
        st.conf_senders[sender] = frozenset(values)
        return self._progress(k)

    def on_coin_share(self, sender: ReplicaId, k: int, share: SignatureShare) -> list[Outbound]:
        st = self._state(k)
        if st.coin is not None or sender in st.coin_shares:
            return []
        name = self._coin_name(k)
        if share.signer != sender or not verify_share(
            self._keys.coin_public, sender, name, share
        ):
            self._violation("aba_bad_coin_share")
            return []
        st.coin_shares[sender] = share
        if len(st.coin_shares) >= self._q.weak:
            shares = list(st.coin_shares.values())
            sig = combine(self._keys.coin_public, name, shares, verified=True)
            st.coin = coin_bit(sig)
        return self._progress(k)

    def on_finish(self, sender: ReplicaId, b: int) -> list[Outbound]:
        if self.halted:
            return []
        previous = self.finish_senders.get(sender)
        if previous is not None:
            if previous != b:
                self._violation("aba_conflicting_finish")
            return []
        self.finish_senders[sender] = b
        count = sum(1 for v in self.finish_senders.values() if v == b)
        out: list[Outbound] = []
        if count >= self._q.weak and not self._finish_sent:
            self._finish_sent = True
            out.append(self._broadcast(MessageKind.ABA_FINISH, AbaFinish(b)))
        if count >= self._q.strong:
            if self.decision is None:
                self.decision = AbaDecision(b, self.internal_round)
            self.halted = True
            self.rounds.clear()
            self._buffer.clear()
        return out

    # --- round progress ---

    def _progress(self, k: int) -> list[Outbound]:
        st = self._state(k)
        out: list[Outbound] = []
        if not st.conf_sent and st.bin_values:
            supported = sum(1 for b in st.aux_senders.values() if b in st.bin_values)
            if supported >= self._q.quorum:
                st.conf_sent = True
                values = frozenset(st.bin_values)
                out.append(self._broadcast(MessageKind.ABA_CONF, AbaConf(k, values)))
        if st.conf_sent and not st.share_sent:
            qualifying = [s for s in st.conf_senders.values() if s <= st.bin_values]
            if len(qualifying) >= self._q.quorum:
                st.values = frozenset().union(*qualifying)
                st.share_sent = True
                share = sign_share(self._keys.coin, self._coin_name(k))
                out.append(self._broadcast(MessageKind.ABA_COIN_SHARE, AbaCoinShare(k, share)))
        if k == self.internal_round and not self.halted:
            out.extend(self._try_advance())
        return out

    def _try_advance(self) -> list[Outbound]:
        k = self.internal_round
        st = self._state(k)
        if st.coin is None or st.values is None:
            return []
        out: list[Outbound] = []
        if len(st.values) == 1:
            (b,) = st.values
            if b == st.coin:
                out.extend(self._decide(b, k))
            self.estimate = b
        else:
            self.estimate = st.coin
        self.internal_round = k + 1
        out.extend(self._enter_round())
        return out

    def _decide(self, b: int, k: int) -> list[Outbound]:
        if self.decision is None:
            self.decision = AbaDecision(b, k)
        if self._finish_sent:
            return []
        self._finish_sent = True
        return [self._broadcast(MessageKind.ABA_FINISH, AbaFinish(b))]
