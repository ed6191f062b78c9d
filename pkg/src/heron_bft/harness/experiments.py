"""Experiment configuration, single runs and parallel sweeps."""

from __future__ import annotations

import dataclasses
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from heron_bft import config, constants
from heron_bft.crypto.keys import KeyMaterial
from heron_bft.errors import ConfigError
from heron_bft.harness.checker import PropertyViolation, check_trace
from heron_bft.harness.metrics import (
    MetricsRecord,
    analytic_messages_per_replica,
    compute_metrics,
    loglog_slope,
)
from heron_bft.models import Config
from heron_bft.sim.faults import FaultModel
from heron_bft.sim.network import PolicySpec, StopCondition, run
from heron_bft.sim.trace import Trace
from heron_bft.sim.workload import WorkloadProfile, WorkloadSpec

logger = logging.getLogger("heron-bft")


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = constants.DEFAULT_N
    f: int | None = None
    batch_size: int = constants.DEFAULT_BATCH_SIZE
    tx_size: int = constants.DEFAULT_TX_SIZE
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    policy: PolicySpec = field(default_factory=PolicySpec)
    faults: str = constants.DEFAULT_FAULTS
    seeds: tuple[int, ...] = (1,)
    max_steps: int = constants.DEFAULT_MAX_STEPS
    debt_factor: int = constants.DEBT_FACTOR
    modulus_bits: int = constants.DEFAULT_MODULUS_BITS
    key_seed: int = constants.DEFAULT_KEY_SEED
    lookahead: int = constants.ABA_LOOKAHEAD_ROUNDS

    def __post_init__(self) -> None:
        if self.f is None:
            object.__setattr__(self, "f", (self.n - 1) // 3)
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if self.debt_factor < 1:
            raise ConfigError(f"debt_factor must be positive, got {self.debt_factor}")
        if self.lookahead < 1:
            raise ConfigError(f"lookahead_rounds must be positive, got {self.lookahead}")
        # validates n, f, batch_size, tx_size and the fault string
        FaultModel.parse(self.faults, self.cfg)
        StopCondition(self.max_steps)

    @property
    def cfg(self) -> Config:
        return Config(self.n, self.f, self.batch_size, self.tx_size)

    @property
    def debt_cap(self) -> int:
        return self.debt_factor * self.n * self.n

    def label(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "f": self.f,
            "batch_size": self.batch_size,
            "policy": str(self.policy),
            "faults": self.faults,
            "workload": self.workload.profile.value,
        }

    @classmethod
    def from_config(cls, **overrides: Any) -> ExperimentConfig:
        """Build from the TOML config; keyword overrides that are not None win."""
        data = config.load_config()
        exp = data.get("experiment", {})
        net = data.get("network", {})
        crypto = data.get("crypto", {})
        aba = data.get("aba", {})
        values: dict[str, Any] = {
            "n": exp.get("n", constants.DEFAULT_N),
            "f": exp.get("f"),
            "batch_size": exp.get("batch_size", constants.DEFAULT_BATCH_SIZE),
            "tx_size": exp.get("tx_size", constants.DEFAULT_TX_SIZE),
            "workload": exp.get("workload", constants.DEFAULT_WORKLOAD),
            "batches": exp.get("batches", constants.DEFAULT_BATCHES),
            "policy": exp.get("policy", constants.DEFAULT_POLICY),
            "faults": exp.get("faults", constants.DEFAULT_FAULTS),
            "seeds": exp.get("seeds", constants.DEFAULT_SEEDS),
            "max_steps": exp.get("max_steps", constants.DEFAULT_MAX_STEPS),
            "debt_factor": net.get("debt_factor", constants.DEBT_FACTOR),
            "target_fraction": net.get("target_fraction", constants.DEFAULT_ATTACK_FRACTION),
            "modulus_bits": crypto.get("modulus_bits", constants.DEFAULT_MODULUS_BITS),
            "key_seed": crypto.get("key_seed", constants.DEFAULT_KEY_SEED),
            "lookahead": aba.get("lookahead_rounds", constants.ABA_LOOKAHEAD_ROUNDS),
        }
        for key, value in overrides.items():
            if value is not None:
                values[key] = value
        if overrides.get("n") is not None and overrides.get("f") is None:
            values["f"] = None

        try:
            profile = WorkloadProfile(values.pop("workload"))
        except ValueError as e:
            raise ConfigError(str(e)) from e
        workload = WorkloadSpec(profile, batches=int(values.pop("batches")))
        policy_text = str(values.pop("policy"))
        policy = PolicySpec.parse(policy_text)
        fraction = float(values.pop("target_fraction"))
        if policy.name == "adversarial" and ":" not in policy_text:
            policy = dataclasses.replace(policy, target_fraction=fraction)
        seeds = values.pop("seeds")
        if isinstance(seeds, str):
            seeds = config.parse_seeds(seeds)
        elif isinstance(seeds, int):
            seeds = [seeds]
        try:
            return cls(
                workload=workload, policy=policy, seeds=tuple(int(s) for s in seeds), **values
            )
        except TypeError as e:
            raise ConfigError(str(e)) from e


@dataclass
class RunResult:
    seed: int
    trace: Trace
    metrics: MetricsRecord
    violations: list[PropertyViolation]


def run_experiment(
    exp: ExperimentConfig, seed: int, keys: KeyMaterial | None = None
) -> RunResult:
    cfg = exp.cfg
    trace = run(
        cfg,
        seed,
        exp.policy,
        FaultModel.parse(exp.faults, cfg, seed),
        exp.workload,
        StopCondition(exp.max_steps),
        keys=keys,
        key_seed=exp.key_seed,
        modulus_bits=exp.modulus_bits,
        debt_cap=exp.debt_cap,
        lookahead=exp.lookahead,
    )
    violations = check_trace(trace)
    for v in violations:
        logger.error(f"seed {seed}: {v}")
    return RunResult(seed, trace, compute_metrics(trace), violations)


# --- Sweeps ---

@dataclass
class SweepRow:
    label: dict[str, Any]
    seed: int
    metrics: MetricsRecord
    violations: list[str]

    def flat(self) -> dict[str, Any]:
        row = {**self.label, **self.metrics.scalars(), "seed": self.seed}
        row["violations"] = len(self.violations)
        return row

    def sort_key(self) -> tuple:
        lb = self.label
        return (lb["n"], lb["batch_size"], lb["policy"], lb["faults"], lb["workload"], self.seed)


def _sweep_one(job: tuple[ExperimentConfig, int]) -> SweepRow:
    exp, seed = job
    result = run_experiment(exp, seed)
    return SweepRow(exp.label(), seed, result.metrics, [str(v) for v in result.violations])


def expand_grid(
    base: ExperimentConfig,
    ns: list[int] | None = None,
    batch_sizes: list[int] | None = None,
    policies: list[str] | None = None,
    faults: list[str] | None = None,
) -> list[ExperimentConfig]:
    grid = itertools.product(
        ns or [base.n],
        batch_sizes or [base.batch_size],
        [PolicySpec.parse(p) for p in policies] if policies else [base.policy],
        faults or [base.faults],
    )
    return [
        dataclasses.replace(base, n=n, f=None if n != base.n else base.f, batch_size=b,
                            policy=p, faults=fs)
        for n, b, p, fs in grid
    ]


def run_sweep(experiments: list[ExperimentConfig], jobs: int = 1) -> list[SweepRow]:
    """Run every (experiment, seed) pair; rows come back sorted regardless of completion order."""
    work = [(exp, seed) for exp in experiments for seed in exp.seeds]
    logger.info(f"sweep: {len(work)} runs on {jobs} worker(s)")
    if jobs <= 1:
        rows = [_sweep_one(job) for job in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, work))
    return sorted(rows, key=SweepRow.sort_key)


def summarize(rows: list[SweepRow]) -> list[dict[str, Any]]:
    """Per-configuration means with the analytic message counts for sigma in {1, 2, n}."""
    groups: dict[tuple, list[SweepRow]] = {}
    for row in rows:
        groups.setdefault(row.sort_key()[:-1], []).append(row)
    summary = []
    for _, group in sorted(groups.items()):
        label = group[0].label
        n = label["n"]

        def mean(name: str, rows: list[SweepRow] = group) -> float | None:
            values = [getattr(r.metrics, name) for r in rows]
            values = [v for v in values if v is not None]
            return sum(values) / len(values) if values else None

        summary.append(
            {
                **label,
                "runs": len(group),
                "violations": sum(len(r.violations) for r in group),
                "quiescent": sum(1 for r in group if r.metrics.quiescent),
                "sigma_mean": mean("sigma_mean"),
                "messages_per_batch": mean("messages_per_batch"),
                "mean_internal_rounds": mean("mean_internal_rounds"),
                "goodput": mean("goodput"),
                "throughput": mean("throughput"),
                "latency_mean": mean("latency_mean"),
                "analytic_sigma_1": analytic_messages_per_replica(n, 1),
                "analytic_sigma_2": analytic_messages_per_replica(n, 2),
                "analytic_sigma_n": analytic_messages_per_replica(n, n),
            }
        )
    return summary


def scaling_slopes(summary: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Log-log slope of messages per replica per batch against n, per fixed configuration."""
    groups: dict[tuple, list[dict[str, Any]]] = {}
    for row in summary:
        if row["messages_per_batch"]:
            key = (row["batch_size"], row["policy"], row["faults"], row["workload"])
            groups.setdefault(key, []).append(row)
    slopes = []
    for (batch_size, policy, faults, workload), rows in sorted(groups.items()):
        ns = [r["n"] for r in rows]
        if len(set(ns)) < 2:
            continue
        per_batch = [r["messages_per_batch"] for r in rows]
        slopes.append(
            {
                "batch_size": batch_size,
                "policy": policy,
                "faults": faults,
                "workload": workload,
                "ns": ns,
                "slope": loglog_slope(ns, per_batch),
            }
        )
    return slopes
