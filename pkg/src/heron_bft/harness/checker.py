"""Trace checker: safety predicates evaluated over the correct replicas of a trace."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from heron_bft.harness.metrics import correct_replicas
from heron_bft.models import AbaDecided, BatchDelivered, RoundStarted, VcbcDelivered
from heron_bft.sim.trace import Trace


@dataclass(frozen=True)
class PropertyViolation:
    property: str
    detail: str

    def __str__(self) -> str:
        return f"{self.property}: {self.detail}"


def output_streams(trace: Trace) -> dict[int, list[bytes]]:
    streams: dict[int, list[bytes]] = {i: [] for i in correct_replicas(trace)}
    for rec in trace.records:
        if rec.replica in streams:
            streams[rec.replica].extend(rec.delivered)
    return streams


# --- output stream properties ---

def _check_integrity(streams: dict[int, list[bytes]]) -> list[PropertyViolation]:
    out = []
    for replica, stream in streams.items():
        if len(set(stream)) != len(stream):
            out.append(PropertyViolation("integrity", f"replica {replica} output a message twice"))
    return out


def _check_total_order(streams: dict[int, list[bytes]]) -> list[PropertyViolation]:
    if not streams:
        return []
    longest = max(streams.values(), key=len)
    out = []
    for replica, stream in streams.items():
        if stream != longest[:len(stream)]:
            diverge = next(i for i, (a, b) in enumerate(zip(stream, longest)) if a != b)
            out.append(
                PropertyViolation(
                    "total-order", f"replica {replica} diverges at output position {diverge}"
                )
            )
    return out


def _check_agreement(streams: dict[int, list[bytes]]) -> list[PropertyViolation]:
    sets = {replica: frozenset(stream) for replica, stream in streams.items()}
    if len(set(sets.values())) <= 1:
        return []
    sizes = ", ".join(f"{r}={len(s)}" for r, s in sorted(sets.items()))
    return [PropertyViolation("agreement", f"quiescent output sets differ ({sizes})")]


# --- protocol-level properties ---

def _check_vcbc_consistency(trace: Trace, correct: set[int]) -> list[PropertyViolation]:
    seen: dict[tuple[int, int], bytes] = {}
    out = []
    for _, replica, note in trace.notes(VcbcDelivered):
        if replica not in correct:
            continue
        key = (note.origin, note.priority)
        if seen.setdefault(key, note.digest) != note.digest:
            out.append(
                PropertyViolation("vcbc-consistency", f"conflicting deliveries for VCBC {key}")
            )
    return out


def _check_aba(trace: Trace, correct: set[int]) -> list[PropertyViolation]:
    decisions: dict[int, set[int]] = defaultdict(set)
    proposals: dict[int, dict[int, int]] = defaultdict(dict)
    for _, replica, note in trace.notes():
        if replica not in correct:
            continue
        if isinstance(note, AbaDecided):
            decisions[note.round].add(note.value)
        elif isinstance(note, RoundStarted):
            proposals[note.round][replica] = note.proposal
    out = []
    for r, values in sorted(decisions.items()):
        if len(values) > 1:
            out.append(PropertyViolation("aba-agreement", f"round {r} decided both bits"))
        proposed = proposals.get(r, {})
        if len(proposed) == len(correct) and len(set(proposed.values())) == 1:
            (b,) = set(proposed.values())
            if values != {b}:
                out.append(
                    PropertyViolation("aba-validity", f"round {r} unanimously proposed {b}")
                )
    return out


def _check_lockstep(trace: Trace, correct: set[int]) -> list[PropertyViolation]:
    expected_start = dict.fromkeys(correct, 0)
    open_round: dict[int, int | None] = dict.fromkeys(correct)
    out = []
    for _, replica, note in trace.notes():
        if replica not in correct:
            continue
        if isinstance(note, RoundStarted):
            if open_round[replica] is not None or note.round != expected_start[replica]:
                out.append(
                    PropertyViolation(
                        "round-lockstep", f"replica {replica} started round {note.round} early"
                    )
                )
            open_round[replica] = note.round
            expected_start[replica] = note.round + 1
        elif isinstance(note, AbaDecided):
            if open_round[replica] != note.round:
                out.append(
                    PropertyViolation(
                        "round-lockstep",
                        f"replica {replica} decided round {note.round} outside that round",
                    )
                )
            open_round[replica] = None
    return out


def _check_consensus_holds(trace: Trace, correct: set[int]) -> list[PropertyViolation]:
    entry: dict[int, tuple[int, bytes]] = {}
    out = []
    for _, replica, note in trace.notes(RoundStarted):
        if replica not in correct:
            continue
        state = (note.delivered_count, note.output_chain)
        if entry.setdefault(note.round, state) != state:
            out.append(
                PropertyViolation(
                    "consensus-holds",
                    f"replica {replica} entered round {note.round} with a different output set",
                )
            )
    return out


def _check_prepared(trace: Trace, correct: set[int]) -> list[PropertyViolation]:
    """At most one value per (queue, slot) is ever held, head-proposed or delivered."""
    values: dict[tuple[int, int], set[bytes]] = defaultdict(set)
    round_deliveries: dict[int, set[tuple[int, int, bytes]]] = defaultdict(set)
    for _, replica, note in trace.notes():
        if replica not in correct:
            continue
        if isinstance(note, VcbcDelivered):
            values[(note.origin, note.priority)].add(note.digest)
        elif isinstance(note, RoundStarted) and note.head_digest:
            values[(note.queue, note.head)].add(note.head_digest)
        elif isinstance(note, BatchDelivered):
            values[(note.queue, note.slot)].add(note.digest)
            round_deliveries[note.round].add((note.queue, note.slot, note.digest))
    out = []
    for key, digests in sorted(values.items()):
        if len(digests) > 1:
            out.append(PropertyViolation("prepared", f"slot {key} holds {len(digests)} values"))
    for r, delivered in sorted(round_deliveries.items()):
        if len(delivered) > 1:
            out.append(
                PropertyViolation("decision-one-safety", f"round {r} delivered different batches")
            )
    return out


def _check_head_validity(trace: Trace, correct: set[int]) -> list[PropertyViolation]:
    """n-f correct replicas entering a round with the same filled head force its delivery.

    Only the queue a round visits has its head recorded. A value held at the head
    of queue i by n-f correct replicas stays there until it is delivered, since
    heads only move past used slots, so checking every visit of queue i covers
    the first later round that maps to i.
    """
    m = trace.manifest
    heads: dict[int, dict[bytes, int]] = defaultdict(lambda: defaultdict(int))
    decided: dict[int, set[int]] = defaultdict(set)
    delivered: dict[int, set[bytes]] = defaultdict(set)
    for _, replica, note in trace.notes():
        if replica not in correct:
            continue
        if isinstance(note, RoundStarted) and note.head_digest:
            heads[note.round][note.head_digest] += 1
        elif isinstance(note, AbaDecided):
            decided[note.round].add(note.value)
        elif isinstance(note, BatchDelivered):
            delivered[note.round].add(note.digest)
    out = []
    for r, counts in sorted(heads.items()):
        for digest, count in counts.items():
            if count < m.n - m.f:
                continue
            if 0 in decided.get(r, ()):
                out.append(
                    PropertyViolation("head-validity", f"round {r} skipped a prepared head")
                )
            elif delivered.get(r) and digest not in delivered[r]:
                out.append(
                    PropertyViolation(
                        "head-validity", f"round {r} delivered something other than its head"
                    )
                )
    return out


def check_trace(trace: Trace) -> list[PropertyViolation]:
    """Evaluate every safety predicate; an empty list means the trace is clean."""
    correct = set(correct_replicas(trace))
    streams = output_streams(trace)
    violations = _check_integrity(streams) + _check_total_order(streams)
    if trace.quiescent:
        violations += _check_agreement(streams)
    violations += _check_vcbc_consistency(trace, correct)
    violations += _check_aba(trace, correct)
    violations += _check_lockstep(trace, correct)
    violations += _check_consensus_holds(trace, correct)
    violations += _check_prepared(trace, correct)
    violations += _check_head_validity(trace, correct)
    return violations
