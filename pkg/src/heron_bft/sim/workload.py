"""Client workload generation."""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass

from heron_bft.constants import DEFAULT_BATCHES, DEFAULT_FIXED_RATE_INTERVAL
from heron_bft.errors import ConfigError
from heron_bft.models import ClientMessage, Config, ReplicaId


class WorkloadProfile(str, enum.Enum):
    FULL_LOAD = "full-load"
    SINGLE_SHOT = "single-shot"
    FIXED_RATE = "fixed-rate"


@dataclass(frozen=True)
class WorkloadSpec:
    profile: WorkloadProfile = WorkloadProfile.FULL_LOAD
    batches: int = DEFAULT_BATCHES
    interval: int = DEFAULT_FIXED_RATE_INTERVAL

    def __post_init__(self) -> None:
        if self.batches < 0:
            raise ConfigError(f"batches must be non-negative, got {self.batches}")
        if self.interval < 1:
            raise ConfigError(f"interval must be positive, got {self.interval}")

    def to_dict(self) -> dict:
        return {"profile": self.profile.value, "batches": self.batches, "interval": self.interval}

    @classmethod
    def from_dict(cls, data: dict) -> WorkloadSpec:
        try:
            profile = WorkloadProfile(data.get("profile", WorkloadProfile.FULL_LOAD.value))
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return cls(
            profile=profile,
            batches=int(data.get("batches", DEFAULT_BATCHES)),
            interval=int(data.get("interval", DEFAULT_FIXED_RATE_INTERVAL)),
        )


@dataclass(frozen=True)
class Injection:
    step: int
    replica: ReplicaId
    message: ClientMessage


def _transaction(rng: random.Random, cfg: Config, seed: int, replica: int, index: int) -> bytes:
    prefix = f"tx:{seed}:{replica}:{index}:".encode()
    return prefix + rng.randbytes(max(0, cfg.tx_size - len(prefix)))


def build_workload(spec: WorkloadSpec, cfg: Config, seed: int) -> list[Injection]:
    """Deterministic injection schedule ordered by (step, replica)."""
    rng = random.Random(f"heron-workload:{seed}")
    counters = {i: 0 for i in cfg.replicas}
    injections: list[Injection] = []

    def inject(step: int, replica: int, count: int) -> None:
        for _ in range(count):
            payload = _transaction(rng, cfg, seed, replica, counters[replica])
            counters[replica] += 1
            injections.append(Injection(step, replica, ClientMessage(payload)))

    if spec.profile is WorkloadProfile.FULL_LOAD:
        for replica in cfg.replicas:
            inject(0, replica, spec.batches * cfg.batch_size)
    elif spec.profile is WorkloadProfile.SINGLE_SHOT:
        inject(0, rng.randrange(cfg.n), cfg.batch_size)
    else:
        for k in range(spec.batches):
            for replica in cfg.replicas:
                inject(k * spec.interval, replica, cfg.batch_size)
    injections.sort(key=lambda inj: (inj.step, inj.replica))
    return injections


def workload_digest(injections: list[Injection]) -> str:
    h = hashlib.sha256()
    for inj in injections:
        h.update(inj.step.to_bytes(8, "big") + inj.replica.to_bytes(4, "big") + inj.message.id)
    return h.hexdigest()
