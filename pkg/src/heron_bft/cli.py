"""Click CLI command definitions for heron-bft."""

from __future__ import annotations

import logging
from pathlib import Path

import click

from heron_bft import __version__
from heron_bft.errors import HeronError

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_CONFIG = 3
EXIT_REPLAY_MISMATCH = 4


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(message)s",
    )


def _fail(message: str, code: int = EXIT_CONFIG) -> None:
    click.echo(message, err=True)
    raise SystemExit(code)


@click.group()
@click.version_option(version=__version__, prog_name="heron-bft")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
def cli(verbose: bool) -> None:
    """heron-bft: asynchronous BFT atomic broadcast simulator and experiment harness."""
    _setup_logging(verbose)


def main() -> None:
    """Console entry point; usage errors exit with the config-error code."""
    try:
        rv = cli.main(prog_name="heron-bft", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        raise SystemExit(1)
    except click.ClickException as e:
        e.show()
        raise SystemExit(EXIT_CONFIG)
    raise SystemExit(rv if isinstance(rv, int) else EXIT_OK)


def _experiment_options(f):
    """Options shared by run and sweep (single-valued ones)."""
    options = [
        click.option("--f", "f", type=int, default=None, help="Tolerated faults (default: max)"),
        click.option("--tx-size", type=int, default=None, help="Bytes per transaction"),
        click.option(
            "--workload", type=click.Choice(["full-load", "single-shot", "fixed-rate"]),
            default=None, help="Client workload profile",
        ),
        click.option("--batches", type=int, default=None, help="Batches per replica"),
        click.option("--steps", "max_steps", type=int, default=None, help="Scheduler step cap"),
        click.option(
            "--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
            envvar="HERON_BFT_OUT_DIR", help="Output directory [env: HERON_BFT_OUT_DIR]",
        ),
        click.option(
            "--format", "fmt", type=click.Choice(["json", "csv"]), default=None,
            help="Metrics file format",
        ),
        click.option("--modulus-bits", type=int, default=None, help="Threshold RSA modulus size"),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _out_dir(out_dir: Path | None) -> Path:
    from heron_bft.config import out_dir as default_out_dir
    return out_dir if out_dir is not None else default_out_dir()


def _format(fmt: str | None) -> str:
    from heron_bft.config import get
    return fmt or get("output", "format", "json")


# --- Run commands ---

@cli.command("run")
@click.option("--n", "n", type=int, default=None, help="Number of replicas")
@click.option("--batch-size", type=int, default=None, help="Transactions per batch (B)")
@click.option("--policy", default=None, help="fair | fifo | adversarial[:fraction]")
@click.option("--faults", default=None, help="none | KIND[:count][@step]")
@click.option("--seed", type=int, default=None, help="Run seed (default: first configured)")
@click.option(
    "--keys", "keys_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None, help="Key file written by 'heron-bft dealer'",
)
@_experiment_options
def run_cmd(
    n: int | None, batch_size: int | None, policy: str | None, faults: str | None,
    seed: int | None, keys_path: Path | None, f: int | None, tx_size: int | None,
    workload: str | None, batches: int | None, max_steps: int | None,
    out_dir: Path | None, fmt: str | None, modulus_bits: int | None,
) -> None:
    """Run one simulation, write its trace and metrics."""
    from heron_bft.crypto.keys import read_keys
    from heron_bft.harness.experiments import ExperimentConfig, run_experiment
    from heron_bft.harness.report import run_stem, write_csv, write_metrics
    from heron_bft.sim.trace import write_trace

    try:
        exp = ExperimentConfig.from_config(
            n=n, f=f, batch_size=batch_size, tx_size=tx_size, workload=workload,
            batches=batches, policy=policy, faults=faults, max_steps=max_steps,
            modulus_bits=modulus_bits, seeds=[seed] if seed is not None else None,
        )
        keys = read_keys(keys_path) if keys_path else None
        if keys is not None:
            keys.check(exp.cfg)
        run_seed = exp.seeds[0]
        result = run_experiment(exp, run_seed, keys=keys)
    except HeronError as e:
        _fail(f"Error: {e}")

    directory = _out_dir(out_dir)
    stem = run_stem(exp.n, exp.f, exp.batch_size, str(exp.policy), exp.faults, run_seed)
    trace_path = write_trace(directory / f"{stem}.trace", result.trace)
    if _format(fmt) == "csv":
        metrics_path = write_csv(directory / f"{stem}.csv", [result.metrics.scalars()])
    else:
        metrics_path = write_metrics(
            directory / f"{stem}.json", result.metrics,
            {"trace_digest": result.trace.digest.hex(),
             "property_violations": [str(v) for v in result.violations]},
        )

    m = result.metrics
    sigma = f"{m.sigma_mean:.3f}" if m.sigma_mean is not None else "n/a"
    click.echo(f"Trace:   {trace_path}")
    click.echo(f"Metrics: {metrics_path}")
    click.echo(
        f"quiescent={m.quiescent} steps={m.final_step} batches={m.batches_delivered} "
        f"sigma={sigma} goodput={m.goodput:.2f}"
    )
    if result.violations:
        for v in result.violations:
            click.echo(f"VIOLATION {v}", err=True)
        raise SystemExit(EXIT_VIOLATION)


@cli.command("sweep")
@click.option("--n", "ns", type=int, multiple=True, help="Replica counts (repeatable)")
@click.option("--batch-size", "batch_sizes", type=int, multiple=True, help="Batch sizes")
@click.option("--policy", "policies", multiple=True, help="Scheduler policies")
@click.option("--faults", "faults", multiple=True, help="Fault models")
@click.option("--seeds", default=None, help='Seed range or list, e.g. "1-20"')
@click.option("--jobs", type=int, default=1, show_default=True, help="Parallel worker processes")
@_experiment_options
def sweep_cmd(
    ns: tuple[int, ...], batch_sizes: tuple[int, ...], policies: tuple[str, ...],
    faults: tuple[str, ...], seeds: str | None, jobs: int, f: int | None,
    tx_size: int | None, workload: str | None, batches: int | None, max_steps: int | None,
    out_dir: Path | None, fmt: str | None, modulus_bits: int | None,
) -> None:
    """Run a grid of experiments across seeds."""
    from heron_bft.harness.experiments import (
        ExperimentConfig,
        expand_grid,
        run_sweep,
        scaling_slopes,
        summarize,
    )
    from heron_bft.harness.report import write_csv, write_json

    try:
        base = ExperimentConfig.from_config(
            n=ns[0] if ns else None, f=f if len(ns) <= 1 else None,
            tx_size=tx_size, workload=workload, batches=batches, max_steps=max_steps,
            modulus_bits=modulus_bits, seeds=seeds,
        )
        grid = expand_grid(base, list(ns), list(batch_sizes), list(policies), list(faults))
        rows = run_sweep(grid, jobs=max(1, jobs))
    except HeronError as e:
        _fail(f"Error: {e}")

    summary = summarize(rows)
    slopes = scaling_slopes(summary)
    directory = _out_dir(out_dir)
    if _format(fmt) == "csv":
        write_csv(directory / "sweep.csv", [r.flat() for r in rows])
        path = write_csv(directory / "sweep-summary.csv", summary)
    else:
        path = write_json(
            directory / "sweep.json",
            {"runs": [r.flat() for r in rows], "summary": summary, "scaling_slopes": slopes},
        )
    click.echo(f"{len(rows)} runs -> {path}")
    for s in summary:
        sigma = f"{s['sigma_mean']:.3f}" if s["sigma_mean"] is not None else "n/a"
        click.echo(
            f"  n={s['n']:<3} B={s['batch_size']:<5} {s['policy']:<16} {s['faults']:<18} "
            f"sigma={sigma} violations={s['violations']}"
        )
    for s in slopes:
        click.echo(f"  messages/replica/batch log-log slope vs n: {s['slope']:.3f}")
    if any(r.violations for r in rows):
        raise SystemExit(EXIT_VIOLATION)


# --- Trace commands ---

@cli.command("check-trace")
@click.argument("path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def check_trace_cmd(path: Path) -> None:
    """Re-verify the safety properties on a stored trace."""
    from heron_bft.harness.checker import check_trace
    from heron_bft.sim.trace import read_trace

    try:
        trace = read_trace(path)
    except HeronError as e:
        _fail(f"Error: {e}")
    violations = check_trace(trace)
    if violations:
        for v in violations:
            click.echo(f"VIOLATION {v}", err=True)
        raise SystemExit(EXIT_VIOLATION)
    click.echo(f"OK: {len(trace.records)} records, quiescent={trace.quiescent}")


@cli.command("replay")
@click.argument("path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--keys", "keys_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None, help="Key file the trace was recorded with",
)
def replay_cmd(path: Path, keys_path: Path | None) -> None:
    """Reproduce a trace from its manifest and compare digests."""
    from heron_bft.crypto.keys import read_keys
    from heron_bft.sim.network import replay
    from heron_bft.sim.trace import read_trace

    try:
        trace = read_trace(path)
        keys = read_keys(keys_path) if keys_path else None
        fresh = replay(trace.manifest, keys=keys)
    except HeronError as e:
        _fail(f"Error: {e}")
    if fresh.digest != trace.digest:
        click.echo(
            f"MISMATCH: stored {trace.digest.hex()} replayed {fresh.digest.hex()}", err=True
        )
        raise SystemExit(EXIT_REPLAY_MISMATCH)
    click.echo(f"OK: digest {trace.digest.hex()}")


# --- Key commands ---

@cli.command("dealer")
@click.option("--n", "n", type=int, default=None, help="Number of replicas")
@click.option("--f", "f", type=int, default=None, help="Tolerated faults (default: max)")
@click.option("--seed", type=int, default=None, help="Dealer seed")
@click.option("--modulus-bits", type=int, default=None, help="RSA modulus size")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Key file path")
def dealer_cmd(
    n: int | None, f: int | None, seed: int | None, modulus_bits: int | None, out: Path | None
) -> None:
    """Deal threshold key material for n replicas."""
    from heron_bft import config
    from heron_bft.crypto.keys import deal_keys, write_keys
    from heron_bft.models import Config

    try:
        n = n if n is not None else config.get("experiment", "n")
        cfg = Config(n, f) if f is not None else Config.for_n(n)
        seed = seed if seed is not None else config.get("crypto", "key_seed")
        bits = modulus_bits or config.get("crypto", "modulus_bits")
        keys = deal_keys(cfg, seed, bits)
    except HeronError as e:
        _fail(f"Error: {e}")
    path = write_keys(out or _out_dir(None) / f"keys-n{cfg.n}-f{cfg.f}.bin", keys)
    click.echo(
        f"Keys written: {path} (n={cfg.n}, f={cfg.f}, "
        f"t_vcbc={keys.vcbc.threshold}, t_coin={keys.coin.threshold})"
    )


# --- Config commands ---

@cli.group()
def config() -> None:
    """Manage configuration."""


@config.command("init")
@click.option("--force", is_flag=True, help="Overwrite existing config")
def config_init(force: bool) -> None:
    """Create default configuration file."""
    from heron_bft.config import init_config
    try:
        path = init_config(force=force)
        click.echo(f"Config created: {path}")
    except FileExistsError as e:
        click.echo(str(e), err=True)
        raise SystemExit(1)


@config.command("show")
def config_show() -> None:
    """Show current configuration."""
    from heron_bft.config import CONFIG_FILE
    if not CONFIG_FILE.exists():
        click.echo(f"No config file found at {CONFIG_FILE}", err=True)
        click.echo("Run 'heron-bft config init' to create one.", err=True)
        raise SystemExit(1)
    click.echo(CONFIG_FILE.read_text())
