"""Machine-readable run artifacts: JSON-lines event logs, loss-history CSV,
and manifest files carrying the verbatim config for reproducibility."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .config import RunConfig, canonical_json, config_hash


class JsonlLogger:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w")

    def log(self, **event) -> None:
        self._fh.write(json.dumps(event, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def write_loss_history(path, rows: list[dict]) -> None:
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_manifest(path, cfg: RunConfig, **extra) -> dict:
    manifest = {
        "config": cfg.to_json(),
        "config_hash": config_hash(cfg),
        **extra,
    }
    Path(path).write_text(canonical_json(manifest) + "\n")
    return manifest


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
