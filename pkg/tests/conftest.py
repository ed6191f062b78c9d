"""Shared test fixtures."""

from __future__ import annotations

from pathlib import Path

import pytest

from heron_bft import config
from heron_bft.crypto.keys import KeyMaterial, deal_keys
from heron_bft.models import Batch, ClientMessage, Config
from heron_bft.sim.faults import FaultModel
from heron_bft.sim.network import PolicySpec, StopCondition, run
from heron_bft.sim.trace import EventKind, StepRecord, Trace, TraceManifest
from heron_bft.sim.workload import WorkloadProfile, WorkloadSpec

# Small moduli keep key generation and share proofs fast; the scheme is the same.
TEST_MODULUS_BITS = 256
TEST_KEY_SEED = 7


@pytest.fixture(autouse=True)
def tmp_config_dir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Redirect the config directory to a temp dir for every test."""
    cfg_dir = tmp_path / "heron-bft-test"
    cfg_dir.mkdir()
    monkeypatch.setattr(config, "CONFIG_DIR", cfg_dir)
    monkeypatch.setattr(config, "CONFIG_FILE", cfg_dir / "config.toml")
    monkeypatch.delenv(config.OUT_DIR_ENV, raising=False)
    return cfg_dir


@pytest.fixture
def cfg4() -> Config:
    return Config.for_n(4)


@pytest.fixture
def keys4(cfg4: Config) -> KeyMaterial:
    return deal_keys(cfg4, TEST_KEY_SEED, TEST_MODULUS_BITS)


@pytest.fixture
def cfg7() -> Config:
    return Config.for_n(7)


@pytest.fixture
def keys7(cfg7: Config) -> KeyMaterial:
    return deal_keys(cfg7, TEST_KEY_SEED, TEST_MODULUS_BITS)


def make_batch(*payloads: bytes) -> Batch:
    return Batch(tuple(ClientMessage(p) for p in payloads))


def simulate(
    n: int = 4,
    seed: int = 1,
    policy: str = "fair",
    faults: str = "none",
    batches: int = 2,
    batch_size: int = 1,
    profile: WorkloadProfile = WorkloadProfile.FULL_LOAD,
    max_steps: int = 200_000,
) -> Trace:
    """Run a small simulation with test-sized keys."""
    cfg = Config.for_n(n, batch_size=batch_size, tx_size=64)
    return run(
        cfg,
        seed,
        PolicySpec.parse(policy),
        FaultModel.parse(faults, cfg, seed),
        WorkloadSpec(profile, batches=batches),
        StopCondition(max_steps),
        key_seed=TEST_KEY_SEED,
        modulus_bits=TEST_MODULUS_BITS,
    )


def manifest(**overrides) -> TraceManifest:
    """A hand-built manifest for synthetic traces."""
    fields = dict(
        n=4, f=1, batch_size=1, tx_size=64, seed=0, policy="fair", faults="none",
        workload={}, max_steps=1000, quiesce=True, debt_cap=1024, lookahead=8,
        key_seed=7, modulus_bits=TEST_MODULUS_BITS,
    )
    fields.update(overrides)
    return TraceManifest(**fields)


def record(step, replica, *notes, delivered=(), sent=b"", event=EventKind.RECEIVE) -> StepRecord:
    return StepRecord(
        step, replica, event, 0, 0, b"", b"", sent, 0, tuple(delivered), tuple(notes)
    )
