"""JSON and CSV result files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

from heron_bft.harness.metrics import MetricsRecord


def _slug(text: str) -> str:
    return text.replace(":", "-").replace("@", "at")


def run_stem(n: int, f: int, batch_size: int, policy: str, faults: str, seed: int) -> str:
    """File name stem shared by a run's trace and metrics files."""
    return f"run-n{n}-f{f}-b{batch_size}-{_slug(policy)}-{_slug(faults)}-s{seed}"


def write_json(path: Path, document: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_metrics(path: Path, metrics: MetricsRecord, extra: dict | None = None) -> Path:
    return write_json(path, {**metrics.to_dict(), **(extra or {})})


def write_csv(path: Path, rows: list[dict[str, Any]]) -> Path:
    """Write *rows* with the union of their keys as header, first-seen order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header: list[str] = []
    for row in rows:
        header.extend(k for k in row if k not in header)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if row.get(k) is None else row.get(k) for k in header})
    return path
