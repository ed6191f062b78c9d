"""TOML configuration management."""

from __future__ import annotations

import os
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from heron_bft import constants
from heron_bft.errors import ConfigError

CONFIG_DIR = Path("~/.config/heron-bft").expanduser()
CONFIG_FILE = CONFIG_DIR / "config.toml"
OUT_DIR_ENV = "HERON_BFT_OUT_DIR"

DEFAULT_CONFIG = """\
# heron-bft configuration

[experiment]
# Replicas; f defaults to floor((n-1)/3), set it to tolerate fewer faults (n >= 3f+1)
n = {n}
# f = {f}
# Client transactions per proposed batch, and bytes per transaction
batch_size = {batch_size}
tx_size = {tx_size}
# full-load | single-shot | fixed-rate
workload = "{workload}"
batches = {batches}
# fair | fifo | adversarial[:fraction]
policy = "{policy}"
# none | crash[:count][@step] | silent | invalid-proposer | equivocator | fuzzer
faults = "{faults}"
# Seed list or range, e.g. "1-20" or "1,5,9"
seeds = "{seeds}"
# Scheduler step cap per run
max_steps = {max_steps}

[network]
# Fairness-debt cap D = debt_factor * n^2 scheduler steps
debt_factor = {debt_factor}
# Share of queues targeted by the adversarial policy
target_fraction = {target_fraction}

[crypto]
modulus_bits = {modulus_bits}
key_seed = {key_seed}

[aba]
# Future internal rounds buffered per binary agreement
lookahead_rounds = {lookahead}

[output]
# json | csv
format = "{format}"
""".format(
    n=constants.DEFAULT_N,
    f=(constants.DEFAULT_N - 1) // 3,
    batch_size=constants.DEFAULT_BATCH_SIZE,
    tx_size=constants.DEFAULT_TX_SIZE,
    workload=constants.DEFAULT_WORKLOAD,
    batches=constants.DEFAULT_BATCHES,
    policy=constants.DEFAULT_POLICY,
    faults=constants.DEFAULT_FAULTS,
    seeds=constants.DEFAULT_SEEDS,
    max_steps=constants.DEFAULT_MAX_STEPS,
    debt_factor=constants.DEBT_FACTOR,
    target_fraction=constants.DEFAULT_ATTACK_FRACTION,
    modulus_bits=constants.DEFAULT_MODULUS_BITS,
    key_seed=constants.DEFAULT_KEY_SEED,
    lookahead=constants.ABA_LOOKAHEAD_ROUNDS,
    format=constants.DEFAULT_FORMAT,
)


def init_config(force: bool = False) -> Path:
    """Create default config file. Returns path to config file."""
    CONFIG_DIR.mkdir(parents=True, exist_ok=True)
    if CONFIG_FILE.exists() and not force:
        raise FileExistsError(f"Config already exists: {CONFIG_FILE}")
    CONFIG_FILE.write_text(DEFAULT_CONFIG)
    return CONFIG_FILE


def _deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursively merge *override* into *base*, returning a new dict."""
    result = dict(base)
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = _deep_merge(result[key], value)
        else:
            result[key] = value
    return result


def load_config() -> dict[str, Any]:
    """Load config from TOML file, merged on top of built-in defaults."""
    defaults = tomllib.loads(DEFAULT_CONFIG)
    if CONFIG_FILE.exists():
        try:
            on_disk = tomllib.loads(CONFIG_FILE.read_text())
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{CONFIG_FILE}: {e}") from e
        return _deep_merge(defaults, on_disk)
    return defaults


def get(section: str, key: str, default: Any = None) -> Any:
    """Get a config value by section and key."""
    cfg = load_config()
    return cfg.get(section, {}).get(key, default)


def out_dir() -> Path:
    """Default output directory: $HERON_BFT_OUT_DIR or ./heron-out."""
    return Path(os.environ.get(OUT_DIR_ENV) or constants.DEFAULT_OUT_DIR)


def parse_seeds(text: str) -> list[int]:
    """Parse "1-20", "3" or "1,5,9" (ranges inclusive) into a sorted seed list.

    >>> parse_seeds("1-3,7")
    [1, 2, 3, 7]
    """
    seeds: set[int] = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                start, end = int(lo), int(hi)
                if end < start:
                    raise ConfigError(f"empty seed range {part!r}")
                seeds.update(range(start, end + 1))
            else:
                seeds.add(int(part))
        except ValueError as e:
            raise ConfigError(f"bad seed {part!r}") from e
    if not seeds:
        raise ConfigError("seed list is empty")
    return sorted(seeds)
