"""Tests for the simulated network and the run loop."""

import random

import pytest

from heron_bft.errors import ConfigError
from heron_bft.harness.checker import check_trace
from heron_bft.harness.metrics import compute_metrics
from heron_bft.models import MessageKind, VcbcId
from heron_bft.sim.faults import FaultBehavior, FaultModel
from heron_bft.sim.network import (
    AdversarialVcbcDelay,
    FairRandom,
    FifoPerLink,
    Network,
    PolicySpec,
    Scheduler,
    StopCondition,
    replay,
    run,
)
from heron_bft.sim.workload import WorkloadProfile, WorkloadSpec, build_workload
from tests.conftest import simulate


class _Withhold(Scheduler):
    def push(self, pm):
        pass

    def pick(self):
        return None


def _send(net, seq_count, step=0, kind=MessageKind.ABA_BVAL):
    for i in range(seq_count):
        net.send(0, 1, bytes([i]), kind, 0, step)


class TestNetwork:
    def test_withheld_messages_are_forced(self):
        net = Network(_Withhold(), debt_cap=100)
        _send(net, 2)
        pm = net.next(1)
        assert pm.data == b"\x00"
        assert net.forced == 1
        assert len(net) == 1

    def test_debt_cap_forces_oldest(self, cfg4):
        sched = FairRandom()
        sched.bind(cfg4, FaultModel(), random.Random(0))
        net = Network(sched, debt_cap=10)
        _send(net, 1, step=0)
        net.send(0, 2, b"new", MessageKind.ABA_AUX, 0, 9)
        assert net.next(10).data == b"\x00"
        assert net.forced == 1
        assert net.next(11).data == b"new"
        assert net.next(12) is None

    def test_fifo_keeps_link_order(self, cfg4):
        sched = FifoPerLink()
        sched.bind(cfg4, FaultModel(), random.Random(0))
        net = Network(sched, debt_cap=1000)
        _send(net, 3)
        seen = [net.next(step).data for step in (1, 2, 3)]
        assert seen == [b"\x00", b"\x01", b"\x02"]
        assert net.forced == 0
        assert net.next(9) is None

    def test_bad_debt_cap(self):
        with pytest.raises(ConfigError):
            Network(FairRandom(), debt_cap=0)


class TestPolicySpec:
    @pytest.mark.parametrize(
        ("text", "name", "fraction"),
        [("fair", "fair", 0.25), ("fifo", "fifo", 0.25), ("adversarial:0.5", "adversarial", 0.5)],
    )
    def test_parse(self, text, name, fraction):
        spec = PolicySpec.parse(text)
        assert (spec.name, spec.target_fraction) == (name, fraction)

    def test_str_round_trips(self):
        for text in ("fair", "fifo", "adversarial", "adversarial:0.5"):
            spec = PolicySpec.parse(text)
            assert PolicySpec.parse(str(spec)) == spec
        assert str(PolicySpec.parse("adversarial")) == "adversarial:0.25"

    @pytest.mark.parametrize("text", ["chaos", "fair:1", "adversarial:0", "adversarial:x"])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            PolicySpec.parse(text)

    def test_build(self):
        assert isinstance(PolicySpec.parse("fifo").build(), FifoPerLink)
        assert isinstance(PolicySpec.parse("adversarial").build(), AdversarialVcbcDelay)


class TestAdversarial:
    def test_bind_targets(self, cfg4):
        sched = AdversarialVcbcDelay()
        sched.bind(cfg4, FaultModel(), random.Random(0))
        assert sched.attacked == frozenset({0})
        assert sched.victims[0] == frozenset({1, 2, 3})

    def test_final_to_victim_is_held(self, cfg4):
        sched = AdversarialVcbcDelay()
        sched.bind(cfg4, FaultModel(), random.Random(0))
        net = Network(sched, debt_cap=1000)
        net.send(0, 2, b"held", MessageKind.VCBC_FINAL, VcbcId(0, 0), 0)
        net.send(0, 0, b"self", MessageKind.VCBC_FINAL, VcbcId(0, 0), 0)
        assert net.next(1).data == b"self"
        assert net.forced == 0
        assert net.next(2).data == b"held"
        assert net.forced == 1

    def test_attack_inflates_sigma(self):
        inflated = False
        for seed in (1, 2, 3):
            trace = simulate(policy="adversarial", seed=seed, batches=3)
            assert check_trace(trace) == []
            assert trace.quiescent
            metrics = compute_metrics(trace)
            if any(v > 1 for k, v in metrics.sigma_per_slot.items() if k.startswith("0:")):
                inflated = True
        assert inflated


class TestRun:
    def test_deterministic(self):
        assert simulate(seed=3).digest == simulate(seed=3).digest

    def test_seed_changes_trace(self):
        assert simulate(seed=3).digest != simulate(seed=4).digest

    def test_replay_reproduces_digest(self):
        trace = simulate(seed=6, policy="fifo")
        assert replay(trace.manifest).digest == trace.digest

    @pytest.mark.parametrize("policy", ["fair", "fifo"])
    def test_all_injections_delivered(self, policy):
        trace = simulate(seed=2, policy=policy, batches=3)
        assert trace.quiescent
        injected = sum(1 for rec in trace.records if rec.event.name == "SUBMIT")
        assert injected == 12
        for snap in trace.snapshots:
            assert snap["delivered"] == 12
        assert check_trace(trace) == []

    def test_crash_fault_liveness(self):
        trace = simulate(faults="crash:1", seed=8, batches=3)
        assert trace.quiescent
        correct = [s for s in trace.snapshots if s["correct"]]
        assert len(correct) == 3
        assert {s["delivered"] for s in correct} == {9}
        assert check_trace(trace) == []

    def test_step_cap_truncates(self):
        trace = simulate(seed=1, max_steps=50)
        assert not trace.quiescent
        assert trace.final_step <= 50

    def test_too_many_faults(self, cfg4):
        faults = FaultModel(FaultBehavior.SILENT, frozenset({2, 3}))
        with pytest.raises(ConfigError):
            run(cfg4, 0, PolicySpec(), faults, WorkloadSpec(), StopCondition(10))

    def test_bad_stop_condition(self):
        with pytest.raises(ConfigError):
            StopCondition(0)


class TestWorkload:
    def test_full_load(self, cfg4):
        injections = build_workload(WorkloadSpec(batches=2), cfg4, 0)
        assert len(injections) == 8
        assert all(inj.step == 0 for inj in injections)
        assert len({inj.message.id for inj in injections}) == 8

    def test_single_shot(self, cfg4):
        injections = build_workload(WorkloadSpec(WorkloadProfile.SINGLE_SHOT), cfg4, 0)
        assert len(injections) == cfg4.batch_size

    def test_fixed_rate_spacing(self, cfg4):
        spec = WorkloadSpec(WorkloadProfile.FIXED_RATE, batches=3, interval=50)
        steps = sorted({inj.step for inj in build_workload(spec, cfg4, 0)})
        assert steps == [0, 50, 100]

    def test_dict_round_trip(self):
        spec = WorkloadSpec(WorkloadProfile.FIXED_RATE, batches=3, interval=50)
        assert WorkloadSpec.from_dict(spec.to_dict()) == spec

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            WorkloadSpec(batches=-1)
        with pytest.raises(ConfigError):
            WorkloadSpec.from_dict({"profile": "burst"})
