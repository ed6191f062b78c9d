"""Metrics computed offline from a trace.

Time is measured in scheduler steps. Every function here is a pure function
of the trace; nothing is instrumented inside the protocol.
"""

from __future__ import annotations

import statistics
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from heron_bft.models import (
    AbaDecided,
    BatchDelivered,
    MessageKind,
    RoundStarted,
)
from heron_bft.sim.faults import FaultModel
from heron_bft.sim.trace import EventKind, Trace

# Messages one replica sends per internal ABA round (BVAL, AUX, CONF, coin
# share) plus the FINISH broadcast that ends the instance.
_ABA_MESSAGES_PER_INTERNAL_ROUND = 4
_ABA_FINISH_MESSAGES = 1
# SEND + ECHO + FINAL, amortized over the n replicas.
_VCBC_MESSAGES_PER_REPLICA = 3


def correct_replicas(trace: Trace) -> list[int]:
    if trace.snapshots:
        return [s["replica"] for s in trace.snapshots if s.get("correct", True)]
    m = trace.manifest
    faults = FaultModel.parse(m.faults, m.cfg, m.seed)
    return [i for i in range(m.n) if faults.is_correct(i)]


def _slot_key(queue: int, slot: int) -> str:
    return f"{queue}:{slot}"


@dataclass
class MetricsRecord:
    n: int
    f: int
    batch_size: int
    seed: int
    policy: str
    faults: str
    quiescent: bool
    final_step: int
    batches_delivered: int = 0
    transactions_delivered: int = 0
    valid_delivered: int = 0
    sigma_per_slot: dict[str, int] = field(default_factory=dict)
    sigma_mean: float | None = None
    sigma_by_queue: dict[int, float] = field(default_factory=dict)
    latency_steps: list[int] = field(default_factory=list)
    latency_mean: float | None = None
    latency_p95: float | None = None
    goodput: float = 0.0
    throughput: float = 0.0
    messages_sent: dict[int, dict[str, int]] = field(default_factory=dict)
    messages_by_kind: dict[str, int] = field(default_factory=dict)
    messages_total: int = 0
    messages_per_batch: float | None = None
    mean_internal_rounds: float | None = None
    max_internal_rounds: int | None = None
    violations: dict[str, int] = field(default_factory=dict)
    signature_bytes: int = 0
    share_bytes: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def scalars(self) -> dict:
        """Flat scalar view used for CSV rows."""
        return {
            k: v for k, v in self.to_dict().items() if not isinstance(v, (dict, list))
        }


# --- sigma ---

def _deliveries(trace: Trace, correct: list[int]) -> dict[tuple[int, int], tuple[int, int]]:
    """First (round, step) at which each (queue, slot) was delivered by a correct replica."""
    first: dict[tuple[int, int], tuple[int, int]] = {}
    ok = set(correct)
    for step, replica, note in trace.notes(BatchDelivered):
        if replica in ok:
            first.setdefault((note.queue, note.slot), (note.round, step))
    return first


def measure_sigma(trace: Trace) -> tuple[dict[str, int], float | None, dict[int, float]]:
    """Binary agreements spent on each delivered slot.

    A slot is charged for every round that visited its queue while it was the
    filled head at some correct replica, up to and including the round that
    delivered it. Returns (per slot, mean, mean per queue).
    """
    correct = set(correct_replicas(trace))
    contested: dict[int, set[int]] = defaultdict(set)  # round -> filled head slots
    queue_of: dict[int, int] = {}
    for _, replica, note in trace.notes(RoundStarted):
        if replica in correct:
            queue_of[note.round] = note.queue
            if note.head_digest:
                contested[note.round].add(note.head)

    per_slot: dict[str, int] = {}
    by_queue: dict[int, list[int]] = defaultdict(list)
    for (queue, slot), (delivered_round, _) in sorted(_deliveries(trace, list(correct)).items()):
        wasted = sum(
            1
            for r in range(queue, delivered_round, trace.manifest.n)
            if queue_of.get(r) == queue and slot in contested.get(r, ())
        )
        sigma = wasted + 1
        per_slot[_slot_key(queue, slot)] = sigma
        by_queue[queue].append(sigma)
    values = list(per_slot.values())
    mean = statistics.fmean(values) if values else None
    return per_slot, mean, {q: statistics.fmean(v) for q, v in sorted(by_queue.items())}


# --- messages ---

def message_counts(trace: Trace) -> dict[int, Counter]:
    counts: dict[int, Counter] = {i: Counter() for i in range(trace.manifest.n)}
    for rec in trace.records:
        for kind in rec.sent:
            counts[rec.replica][MessageKind(kind).name] += 1
    return counts


def reference_replica(trace: Trace) -> int | None:
    correct = correct_replicas(trace)
    return min(correct) if correct else None


def batches_delivered(trace: Trace, replica: int | None = None) -> int:
    if replica is None:
        replica = reference_replica(trace)
    return sum(1 for _, r, _ in trace.notes(BatchDelivered) if r == replica)


def messages_per_batch(trace: Trace) -> float | None:
    """Messages sent per correct replica per delivered batch; None without deliveries."""
    correct = correct_replicas(trace)
    batches = batches_delivered(trace)
    if not correct or not batches:
        return None
    counts = message_counts(trace)
    total = sum(sum(counts[i].values()) for i in correct)
    return total / len(correct) / batches


def analytic_messages_per_replica(n: int, sigma: float, internal_rounds: float = 1.0) -> float:
    """Per-replica messages per delivered batch for a given sigma.

    Broadcast costs a constant per replica, each of the sigma agreements costs
    every replica one broadcast per phase per internal round plus FINISH.
    """
    aba = n * (_ABA_MESSAGES_PER_INTERNAL_ROUND * internal_rounds + _ABA_FINISH_MESSAGES)
    return _VCBC_MESSAGES_PER_REPLICA + sigma * aba


def loglog_slope(ns: list[int], values: list[float]) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    if len(ns) != len(values) or len(ns) < 2:
        raise ValueError("need at least two points")
    slope, _ = np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(values)), 1)
    return float(slope)


# --- latency and rates ---

def _injection_steps(trace: Trace) -> dict[bytes, int]:
    steps: dict[bytes, int] = {}
    for rec in trace.records:
        if rec.event is EventKind.SUBMIT:
            steps.setdefault(rec.event_digest, rec.step)
    return steps


Delivery = tuple[int, int, tuple[bytes, ...]]  # (replica, step, newly output ids)


def _batch_entries(trace: Trace, correct: set[int]) -> dict[tuple[int, int], list[Delivery]]:
    out: dict[tuple[int, int], list[Delivery]] = defaultdict(list)
    for rec in trace.records:
        if rec.replica not in correct:
            continue
        cursor = 0
        for note in rec.notes:
            if isinstance(note, BatchDelivered):
                ids = rec.delivered[cursor:cursor + note.new_entries]
                cursor += note.new_entries
                out[(note.queue, note.slot)].append((rec.replica, rec.step, ids))
    return out


def latencies(trace: Trace) -> list[int]:
    """Injection of a batch's newest entry to its (n-f)-th delivery at a correct replica."""
    m = trace.manifest
    correct = set(correct_replicas(trace))
    injected = _injection_steps(trace)
    needed = m.n - m.f
    result = []
    for _, deliveries in sorted(_batch_entries(trace, correct).items()):
        if len(deliveries) < needed:
            continue
        ids = deliveries[0][2]
        steps = [injected[i] for i in ids if i in injected]
        if not steps:
            continue
        result.append(sorted(d[1] for d in deliveries)[needed - 1] - max(steps))
    return result


def _per_kilostep(count: int, steps: int) -> float:
    return 1000.0 * count / steps if steps else 0.0


def compute_metrics(trace: Trace) -> MetricsRecord:
    m = trace.manifest
    correct = correct_replicas(trace)
    ref = reference_replica(trace)
    record = MetricsRecord(
        n=m.n,
        f=m.f,
        batch_size=m.batch_size,
        seed=m.seed,
        policy=m.policy,
        faults=m.faults,
        quiescent=trace.quiescent,
        final_step=trace.final_step,
        signature_bytes=m.signature_bytes,
        share_bytes=m.share_bytes,
    )

    delivered = [note for _, r, note in trace.notes(BatchDelivered) if r == ref]
    record.batches_delivered = len(delivered)
    record.transactions_delivered = sum(d.new_entries for d in delivered)
    record.valid_delivered = sum(d.valid_entries for d in delivered)
    record.goodput = _per_kilostep(record.valid_delivered, trace.final_step)
    record.throughput = _per_kilostep(record.batches_delivered, trace.final_step)

    record.sigma_per_slot, record.sigma_mean, record.sigma_by_queue = measure_sigma(trace)

    record.latency_steps = latencies(trace)
    if record.latency_steps:
        record.latency_mean = statistics.fmean(record.latency_steps)
        record.latency_p95 = float(np.percentile(record.latency_steps, 95))

    counts = message_counts(trace)
    record.messages_sent = {i: dict(sorted(counts[i].items())) for i in correct}
    by_kind: Counter = Counter()
    for i in correct:
        by_kind.update(counts[i])
    record.messages_by_kind = dict(sorted(by_kind.items()))
    record.messages_total = sum(by_kind.values())
    record.messages_per_batch = messages_per_batch(trace)

    ok = set(correct)
    rounds = [note.internal_round + 1 for _, r, note in trace.notes(AbaDecided) if r in ok]
    if rounds:
        record.mean_internal_rounds = statistics.fmean(rounds)
        record.max_internal_rounds = max(rounds)

    violations: Counter = Counter()
    for snap in trace.snapshots:
        if snap.get("correct", True):
            violations.update(snap.get("violations", {}))
    record.violations = dict(sorted(violations.items()))
    return record

