"""Deterministic discrete-event network: scheduling policies, fairness debt and the run loop.

Channels are reliable: every message is delivered exactly once and unmodified.
The policy only chooses the order. A message that has waited ``debt_cap``
steps is delivered next regardless of the policy.
"""

from __future__ import annotations

import hashlib
import logging
import random
from collections import deque
from dataclasses import dataclass

from heron_bft.codec import encode
from heron_bft.constants import (
    ABA_LOOKAHEAD_ROUNDS,
    DEBT_FACTOR,
    DEFAULT_ATTACK_FRACTION,
    DEFAULT_KEY_SEED,
    DEFAULT_MAX_STEPS,
    DEFAULT_MODULUS_BITS,
)
from heron_bft.crypto.keys import KeyMaterial, deal_keys, dump_keys
from heron_bft.crypto.threshold import sign_share
from heron_bft.errors import ConfigError
from heron_bft.models import (
    AbaDecided,
    Config,
    Instance,
    MessageKind,
    Note,
    ReplicaId,
    RoundStarted,
    quorums,
)
from heron_bft.protocol.replica import (
    ClientSubmit,
    HarnessFlush,
    Receive,
    Replica,
    ReplicaEvent,
    ReplicaOutput,
    Start,
)
from heron_bft.sim.faults import FaultModel, apply_fault_behavior
from heron_bft.sim.trace import EventKind, StepRecord, Trace, TraceManifest
from heron_bft.sim.workload import WorkloadSpec, build_workload, workload_digest

logger = logging.getLogger("heron-bft")


@dataclass(frozen=True)
class PendingMessage:
    seq: int
    src: ReplicaId
    dst: ReplicaId
    data: bytes
    kind: MessageKind
    instance: Instance
    enqueued_at: int


# --- Scheduling policies ---

class Scheduler:
    """Chooses the next message among the live ones. Picks may be stale; the network skips them."""

    def bind(self, cfg: Config, faults: FaultModel, rng: random.Random) -> None:
        self.cfg = cfg
        self.faults = faults
        self.rng = rng

    def push(self, pm: PendingMessage) -> None:
        raise NotImplementedError

    def pick(self) -> int | None:
        raise NotImplementedError

    def observe(self, replica: ReplicaId, notes: list[Note], step: int) -> None:
        pass


class FairRandom(Scheduler):
    """Uniformly random choice among pending messages."""

    def __init__(self) -> None:
        self._pool: list[int] = []

    def push(self, pm: PendingMessage) -> None:
        self._pool.append(pm.seq)

    def pick(self) -> int | None:
        if not self._pool:
            return None
        i = self.rng.randrange(len(self._pool))
        self._pool[i], self._pool[-1] = self._pool[-1], self._pool[i]
        return self._pool.pop()


class FifoPerLink(Scheduler):
    """Random link, oldest message on it first."""

    def __init__(self) -> None:
        self._links: dict[tuple[int, int], deque[int]] = {}

    def push(self, pm: PendingMessage) -> None:
        self._links.setdefault((pm.src, pm.dst), deque()).append(pm.seq)

    def pick(self) -> int | None:
        if not self._links:
            return None
        link = self.rng.choice(list(self._links))
        queue = self._links[link]
        seq = queue.popleft()
        if not queue:
            del self._links[link]
        return seq


class AdversarialVcbcDelay(FairRandom):
    """Withhold VCBC_FINAL of attacked origins from n-f victims.

    A FINAL for slot (o, s) is released once a round that found s as the
    filled head of queue o at some correct replica has been decided by every
    correct replica, so each attacked slot costs at least one wasted binary
    agreement unless the debt cap forces it out first.
    """

    def __init__(self, target_fraction: float = DEFAULT_ATTACK_FRACTION) -> None:
        super().__init__()
        if not 0 < target_fraction <= 1:
            raise ConfigError(f"target fraction must be in (0, 1], got {target_fraction}")
        self.target_fraction = target_fraction
        self._held: dict[tuple[int, int], list[int]] = {}
        self._released: set[tuple[int, int]] = set()
        self._round_slot: dict[int, tuple[int, int]] = {}
        self._contested: set[int] = set()
        self._decided: dict[int, set[int]] = {}

    def bind(self, cfg: Config, faults: FaultModel, rng: random.Random) -> None:
        super().bind(cfg, faults, rng)
        k = max(1, round(self.target_fraction * cfg.n))
        self.attacked = frozenset(range(k))
        quorum = quorums(cfg).quorum
        self.victims = {
            o: frozenset((o + 1 + j) % cfg.n for j in range(quorum)) for o in self.attacked
        }
        self._correct = frozenset(i for i in cfg.replicas if faults.is_correct(i))

    def push(self, pm: PendingMessage) -> None:
        if pm.kind == MessageKind.VCBC_FINAL and pm.instance.origin in self.attacked:
            slot = (pm.instance.origin, pm.instance.priority)
            if slot not in self._released and pm.dst in self.victims[slot[0]]:
                self._held.setdefault(slot, []).append(pm.seq)
                return
        super().push(pm)

    def observe(self, replica: ReplicaId, notes: list[Note], step: int) -> None:
        if replica not in self._correct:
            return
        for note in notes:
            if isinstance(note, RoundStarted) and note.queue in self.attacked:
                self._round_slot.setdefault(note.round, (note.queue, note.head))
                if note.head_digest:
                    self._contested.add(note.round)
            elif isinstance(note, AbaDecided) and note.round in self._round_slot:
                deciders = self._decided.setdefault(note.round, set())
                deciders.add(replica)
                if deciders >= self._correct and note.round in self._contested:
                    self._release(self._round_slot[note.round])

    def _release(self, slot: tuple[int, int]) -> None:
        if slot in self._released:
            return
        self._released.add(slot)
        for seq in self._held.pop(slot, []):
            self._pool.append(seq)


@dataclass(frozen=True)
class PolicySpec:
    """Parsed ``fair`` | ``fifo`` | ``adversarial[:FRACTION]``."""

    name: str = "fair"
    target_fraction: float = DEFAULT_ATTACK_FRACTION

    @classmethod
    def parse(cls, text: str) -> PolicySpec:
        name, _, arg = text.strip().partition(":")
        if name not in ("fair", "fifo", "adversarial"):
            raise ConfigError(f"unknown scheduler policy {name!r}")
        if arg and name != "adversarial":
            raise ConfigError(f"policy {name!r} takes no argument")
        if not arg:
            return cls(name)
        try:
            fraction = float(arg)
        except ValueError as e:
            raise ConfigError(f"bad target fraction {arg!r}") from e
        if not 0 < fraction <= 1:
            raise ConfigError(f"target fraction must be in (0, 1], got {fraction}")
        return cls(name, fraction)

    def __str__(self) -> str:
        if self.name == "adversarial":
            return f"adversarial:{self.target_fraction!r}"
        return self.name

    def build(self) -> Scheduler:
        if self.name == "fifo":
            return FifoPerLink()
        if self.name == "adversarial":
            return AdversarialVcbcDelay(self.target_fraction)
        return FairRandom()


# --- Network ---

class Network:
    def __init__(self, scheduler: Scheduler, debt_cap: int) -> None:
        if debt_cap < 1:
            raise ConfigError(f"debt cap must be positive, got {debt_cap}")
        self.scheduler = scheduler
        self.debt_cap = debt_cap
        self._live: dict[int, PendingMessage] = {}
        self._seq = 0
        self.forced = 0

    def __len__(self) -> int:
        return len(self._live)

    def send(
        self, src: ReplicaId, dst: ReplicaId, data: bytes, kind: MessageKind,
        instance: Instance, step: int,
    ) -> None:
        pm = PendingMessage(self._seq, src, dst, data, kind, instance, step)
        self._seq += 1
        self._live[pm.seq] = pm
        self.scheduler.push(pm)

    def next(self, step: int) -> PendingMessage | None:
        if not self._live:
            return None
        oldest = next(iter(self._live.values()))
        if step - oldest.enqueued_at >= self.debt_cap:
            self.forced += 1
            return self._live.pop(oldest.seq)
        while True:
            seq = self.scheduler.pick()
            if seq is None:
                # everything left is withheld by the policy
                self.forced += 1
                return self._live.pop(oldest.seq)
            pm = self._live.pop(seq, None)
            if pm is not None:
                return pm


# --- Run loop ---

@dataclass(frozen=True)
class StopCondition:
    max_steps: int = DEFAULT_MAX_STEPS
    quiesce: bool = True

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be positive, got {self.max_steps}")


def _event_digest(event: ReplicaEvent) -> bytes:
    if isinstance(event, Receive):
        return hashlib.sha256(event.data).digest()
    if isinstance(event, ClientSubmit):
        return event.message.id
    return b""


class _Runner:
    def __init__(
        self, cfg: Config, seed: int, policy: PolicySpec, faults: FaultModel,
        keys: KeyMaterial, debt_cap: int, lookahead: int, manifest: TraceManifest,
    ) -> None:
        self.cfg = cfg
        self.faults = faults
        self.scheduler = policy.build()
        self.scheduler.bind(cfg, faults, random.Random(f"heron-sched:{seed}"))
        self.network = Network(self.scheduler, debt_cap)
        self.fault_rng = random.Random(f"heron-faults:{seed}")
        self.replicas = [
            Replica(i, cfg, keys.for_replica(i), lookahead=lookahead) for i in cfg.replicas
        ]
        self.correct = [i for i in cfg.replicas if faults.is_correct(i)]
        self.trace = Trace(manifest)
        self.step = 0
        self.missing: dict[int, int] = {}
        self.target: set[bytes] = set()

    def expect(self, ids: set[bytes]) -> None:
        self.target = ids
        self.missing = {i: len(ids) for i in self.correct}

    def quiescent(self) -> bool:
        if any(self.missing.values()):
            return False
        counts = {self.replicas[i].output_count for i in self.correct}
        return len(counts) <= 1

    def dispatch(self, replica: ReplicaId, event: ReplicaEvent, kind: EventKind) -> None:
        state = self.replicas[replica]
        if self.faults.is_correct(replica):
            out = state.handle(event)
        else:
            out = apply_fault_behavior(self.faults, state, event, self.step, self.fault_rng)
        self._record(replica, event, kind, out)

    def _record(
        self, replica: ReplicaId, event: ReplicaEvent, kind: EventKind, out: ReplicaOutput
    ) -> None:
        h = hashlib.sha256()
        sent = bytearray()
        sent_bytes = 0
        for o in out.outbound:
            data = o.raw if o.raw is not None else encode(o.msg)
            dests = self.cfg.replicas if o.dest is None else (o.dest,)
            for dst in dests:
                self.network.send(replica, dst, data, o.msg.kind, o.msg.instance, self.step)
                h.update(dst.to_bytes(4, "big") + len(data).to_bytes(4, "big") + data)
                sent.append(o.msg.kind)
                sent_bytes += len(data)
        for m in out.delivered:
            h.update(m.id)
            if replica in self.missing and m.id in self.target:
                self.missing[replica] -= 1
        self.scheduler.observe(replica, out.notes, self.step)
        src = event.src if isinstance(event, Receive) else replica
        msg_kind = event.data[1] if isinstance(event, Receive) and len(event.data) > 1 else 0
        self.trace.records.append(
            StepRecord(
                step=self.step,
                replica=replica,
                event=kind,
                src=src,
                msg_kind=msg_kind,
                event_digest=_event_digest(event),
                outputs_digest=h.digest(),
                sent=bytes(sent),
                sent_bytes=sent_bytes,
                delivered=tuple(m.id for m in out.delivered),
                notes=tuple(out.notes),
            )
        )


def run(
    cfg: Config,
    seed: int,
    policy: PolicySpec,
    faults: FaultModel,
    workload: WorkloadSpec,
    stop: StopCondition,
    *,
    keys: KeyMaterial | None = None,
    key_seed: int = DEFAULT_KEY_SEED,
    modulus_bits: int = DEFAULT_MODULUS_BITS,
    debt_cap: int | None = None,
    lookahead: int = ABA_LOOKAHEAD_ROUNDS,
) -> Trace:
    """Simulate one run; identical arguments give byte-identical traces."""
    if len(faults.faulty) > cfg.f:
        raise ConfigError(f"{len(faults.faulty)} faulty replicas exceeds f={cfg.f}")
    if keys is None:
        keys = deal_keys(cfg, key_seed, modulus_bits)
    keys.check(cfg)
    if debt_cap is None:
        debt_cap = DEBT_FACTOR * cfg.n * cfg.n
    injections = build_workload(workload, cfg, seed)
    manifest = TraceManifest(
        n=cfg.n,
        f=cfg.f,
        batch_size=cfg.batch_size,
        tx_size=cfg.tx_size,
        seed=seed,
        policy=str(policy),
        faults=faults.spec,
        workload=workload.to_dict(),
        max_steps=stop.max_steps,
        quiesce=stop.quiesce,
        debt_cap=debt_cap,
        lookahead=lookahead,
        key_seed=key_seed,
        modulus_bits=modulus_bits,
        keys_digest=hashlib.sha256(dump_keys(keys)).hexdigest(),
        workload_digest=workload_digest(injections),
        signature_bytes=keys.vcbc.public_key.size,
        share_bytes=len(sign_share(keys.vcbc.shares[0], b"share-size").value),
    )
    runner = _Runner(cfg, seed, policy, faults, keys, debt_cap, lookahead, manifest)
    runner.expect({inj.message.id for inj in injections if faults.is_correct(inj.replica)})
    logger.info(
        f"run n={cfg.n} f={cfg.f} B={cfg.batch_size} seed={seed} "
        f"policy={policy} faults={faults.spec} injections={len(injections)}"
    )

    for i in cfg.replicas:
        runner.dispatch(i, Start(), EventKind.START)

    pending = deque(injections)
    flushed = False
    while True:
        while pending and pending[0].step <= runner.step:
            inj = pending.popleft()
            runner.dispatch(inj.replica, ClientSubmit(inj.message), EventKind.SUBMIT)
        if not pending and not flushed:
            for i in cfg.replicas:
                runner.dispatch(i, HarnessFlush(), EventKind.FLUSH)
            flushed = True
        if flushed and stop.quiesce and runner.quiescent():
            runner.trace.quiescent = True
            break
        if runner.step >= stop.max_steps:
            break
        pm = runner.network.next(runner.step)
        if pm is None:
            if pending:
                runner.step = pending[0].step
                continue
            break
        runner.step += 1
        runner.dispatch(pm.dst, Receive(pm.src, pm.data), EventKind.RECEIVE)

    trace = runner.trace
    if not trace.quiescent and flushed and runner.quiescent():
        trace.quiescent = True
    trace.final_step = runner.step
    trace.snapshots = [
        {**r.snapshot(), "correct": faults.is_correct(r.id)} for r in runner.replicas
    ]
    if trace.quiescent:
        logger.info(
            f"quiescent at step {runner.step}: {len(trace.records)} records, "
            f"{runner.network.forced} forced deliveries"
        )
    else:
        logger.warning(
            f"stopped at step {runner.step} without quiescence "
            f"({len(runner.network)} messages pending)"
        )
    return trace


def replay(manifest: TraceManifest, keys: KeyMaterial | None = None) -> Trace:
    """Re-run the simulation a trace manifest describes."""
    cfg = manifest.cfg
    if keys is None:
        keys = deal_keys(cfg, manifest.key_seed, manifest.modulus_bits)
    if manifest.keys_digest and hashlib.sha256(dump_keys(keys)).hexdigest() != manifest.keys_digest:
        raise ConfigError("trace was recorded with other key material; pass its key file")
    return run(
        cfg,
        manifest.seed,
        PolicySpec.parse(manifest.policy),
        FaultModel.parse(manifest.faults, cfg, manifest.seed),
        WorkloadSpec.from_dict(manifest.workload),
        StopCondition(manifest.max_steps, manifest.quiesce),
        keys=keys,
        key_seed=manifest.key_seed,
        modulus_bits=manifest.modulus_bits,
        debt_cap=manifest.debt_cap,
        lookahead=manifest.lookahead,
    )
