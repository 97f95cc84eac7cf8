"""Small shared I/O helpers: 17-significant-digit CSV round-tripping."""

from __future__ import annotations

import csv
from pathlib import Path


def fmt_float(x: float) -> str:
    """Format with 17 significant digits: exact float64 round-trip."""
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
