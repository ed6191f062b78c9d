"""Tests for experiment configuration, sweeps and result files."""

import csv

import pytest

from heron_bft.errors import ConfigError
from heron_bft.harness.experiments import (
    ExperimentConfig,
    expand_grid,
    run_experiment,
    run_sweep,
    scaling_slopes,
    summarize,
)
from heron_bft.harness.report import run_stem, write_csv, write_json
from heron_bft.sim.workload import WorkloadProfile
from tests.conftest import TEST_MODULUS_BITS

FAST = dict(modulus_bits=TEST_MODULUS_BITS, batches=1, tx_size=64)


class TestExperimentConfig:
    def test_defaults(self):
        exp = ExperimentConfig.from_config()
        assert (exp.n, exp.f, exp.batch_size) == (4, 1, 1)
        assert exp.seeds == (1,)
        assert exp.debt_cap == 64 * 16
        assert exp.workload.profile is WorkloadProfile.FULL_LOAD

    def test_overrides_win(self):
        exp = ExperimentConfig.from_config(n=7, policy="fifo", seeds="1-3", batches=2)
        assert (exp.n, exp.f) == (7, 2)
        assert str(exp.policy) == "fifo"
        assert exp.seeds == (1, 2, 3)
        assert exp.workload.batches == 2

    def test_explicit_f(self):
        assert ExperimentConfig.from_config(n=7, f=1).f == 1

    def test_adversarial_fraction_from_config(self, tmp_config_dir):
        (tmp_config_dir / "config.toml").write_text("[network]\ntarget_fraction = 0.5\n")
        assert ExperimentConfig.from_config(policy="adversarial").policy.target_fraction == 0.5
        exp = ExperimentConfig.from_config(policy="adversarial:0.75")
        assert exp.policy.target_fraction == 0.75

    @pytest.mark.parametrize(
        "overrides",
        [
            {"n": 3, "f": 1},
            {"faults": "crash:2"},
            {"workload": "burst"},
            {"policy": "chaos"},
            {"seeds": "5-1"},
            {"max_steps": 0},
        ],
    )
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_config(**overrides)

    def test_label(self):
        label = ExperimentConfig.from_config(faults="crash:1").label()
        assert label == {
            "n": 4, "f": 1, "batch_size": 1, "policy": "fair",
            "faults": "crash:1", "workload": "full-load",
        }


def test_expand_grid():
    base = ExperimentConfig.from_config(n=4, f=1)
    grid = expand_grid(base, [4, 7], [1, 2], ["fair", "adversarial"], None)
    assert len(grid) == 8
    assert {(e.n, e.f) for e in grid} == {(4, 1), (7, 2)}
    assert {str(e.policy) for e in grid} == {"fair", "adversarial:0.25"}
    assert expand_grid(base) == [base]


def test_run_experiment():
    exp = ExperimentConfig.from_config(**FAST)
    result = run_experiment(exp, 1)
    assert result.violations == []
    assert result.metrics.batches_delivered == 4
    assert result.trace.manifest.seed == 1


def test_sweep_summary_and_slopes():
    base = ExperimentConfig.from_config(seeds="1-2", **FAST)
    rows = run_sweep(expand_grid(base, [4, 7]))
    assert [(r.label["n"], r.seed) for r in rows] == [(4, 1), (4, 2), (7, 1), (7, 2)]
    summary = summarize(rows)
    assert [s["n"] for s in summary] == [4, 7]
    assert all(s["runs"] == 2 and s["violations"] == 0 for s in summary)
    assert summary[0]["analytic_sigma_1"] == 23
    (slope,) = scaling_slopes(summary)
    assert slope["ns"] == [4, 7]
    assert slope["slope"] > 0


def test_slopes_need_two_sizes():
    summary = [{"n": 4, "batch_size": 1, "policy": "fair", "faults": "none",
                "workload": "full-load", "messages_per_batch": 30.0}]
    assert scaling_slopes(summary) == []


class TestReport:
    def test_run_stem(self):
        assert run_stem(4, 1, 1, "adversarial:0.25", "crash:1@50", 3) == (
            "run-n4-f1-b1-adversarial-0.25-crash-1at50-s3"
        )

    def test_write_csv_header_union(self, tmp_path):
        rows = [{"n": 4, "sigma": 1.0}, {"n": 7, "latency": None}]
        path = write_csv(tmp_path / "out" / "rows.csv", rows)
        with path.open(newline="") as fh:
            written = list(csv.DictReader(fh))
        assert written == [
            {"n": "4", "sigma": "1.0", "latency": ""},
            {"n": "7", "sigma": "", "latency": ""},
        ]

    def test_write_json(self, tmp_path):
        path = write_json(tmp_path / "doc.json", {"b": 1, "a": [1, 2]})
        assert path.read_text().startswith('{\n  "a"')
