"""Run artifacts: per-episode metric CSVs and run manifests."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

from .algo import EpisodeRecord

OUTPUT_ENV = "HAMH_OUTPUT_DIR"


def output_root(default="runs") -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or default)


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _fmt(v) -> str:
    # repr keeps every bit of a float
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_metrics(records, path, fields=EpisodeRecord.FIELDS) -> None:
    """Append rows to a headered CSV; the header is written once."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists() or path.stat().st_size == 0
    if not new:
        with path.open(newline="") as fh:
            header = next(csv.reader(fh), None)
        if header != list(fields):
            raise ValueError(f"{path}: existing header {header} does not match {list(fields)}")
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(fields)
        for rec in records:
            row = asdict(rec) if hasattr(rec, "__dataclass_fields__") else dict(rec)
            w.writerow([_fmt(row[f]) for f in fields])


def _parse(v: str):
    # floats are always written with a point or exponent, so int() only
    # succeeds on integer columns
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def read_metrics(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def read_episode_records(path) -> list[EpisodeRecord]:
    return [EpisodeRecord(**row) for row in read_metrics(path)]


@dataclass
class RunManifest:
    scenario: str
    scenario_hash: str
    config: dict
    seed: int
    variant: str
    code_version: str = field(default_factory=code_version)
    outputs: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))
