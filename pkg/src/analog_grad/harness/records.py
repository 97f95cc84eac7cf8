"""Append-only experiment records: one JSON file per resolved config."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class ExperimentRecord:
    """Persisted result of one run; the digest ties it to its exact config."""

    config_digest: str
    mode: str
    seed: int
    status: str
    metrics: dict
    config: dict
    wall_time_s: float = 0.0
    artifacts: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def filename(self) -> str:
        return f"record-{self.config_digest}.json"


def write_record(record: ExperimentRecord, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / record.filename()
    path.write_text(json.dumps(asdict(record), indent=2, sort_keys=True))
    return path


def load_record(path) -> ExperimentRecord:
    doc = json.loads(Path(path).read_text())
    return ExperimentRecord(**doc)


def list_records(out_dir) -> list[ExperimentRecord]:
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        return []
    return [load_record(p) for p in sorted(out_dir.glob("record-*.json"))]
