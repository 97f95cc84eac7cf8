"""Cartesian sweep orchestration with stable per-cell seeding and resume.

Each cell's seed hashes the master seed together with the cell's own axis
values, never their position in the grid: extending an axis later leaves
every existing cell's seed (and therefore its results) untouched.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..errors import ConfigError
from ..ioutil import fmt_float, write_csv
from .config import ResolvedConfig, config_digest
from .records import ExperimentRecord, load_record, write_record
from .runner import run_experiment


def cell_seed(master_seed: int, axis_values: dict) -> int:
    tag = "|".join(f"{name}={axis_values[name]!r}" for name in sorted(axis_values))
    digest = hashlib.sha256(f"{master_seed}|{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2 ** 63 - 1)


def _apply_axis(data: dict, name: str, value):
    if name == "interpolation":
        data["activation"]["i"] = float(value)
    elif name == "alpha":
        data["activation"]["alpha"] = float(value)
    elif name == "learning_rate":
        data["train"]["learning_rate"] = float(value)
    elif name == "bits":
        if data["noise"] is None:
            raise ConfigError("sweep axis 'bits' needs a noise section")
        data["noise"]["bits"] = int(value)
        data["noise"]["sigma"] = None  # re-derive from ep at the new width
    elif name == "ep":
        if data["noise"] is None:
            raise ConfigError("sweep axis 'ep' needs a noise section")
        data["noise"]["ep"] = float(value)
        data["noise"]["sigma"] = None
    elif name == "linear_layers":
        if data["model"]["preset"] != "mlp":
            raise ConfigError("sweep axis 'linear_layers' needs the mlp preset")
        data["model"]["linear_layers"] = int(value)
    else:  # pragma: no cover - axis names validated at parse time
        raise ConfigError(f"unknown sweep axis {name!r}")


def cell_config(base: ResolvedConfig, axis_values: dict) -> ResolvedConfig:
    """Materialize one cell: patched copy, mode 'train', its own seed."""
    data = copy.deepcopy(base.data)
    data["mode"] = "train"
    data["sweep"] = None
    for name, value in axis_values.items():
        _apply_axis(data, name, value)
    if data["noise"] is not None and data["noise"]["sigma"] is None:
        from .config import _parse_noise  # re-resolve sigma from ep
        noise = {k: v for k, v in data["noise"].items() if k != "sigma"}
        data["noise"] = _parse_noise(noise, "config.noise")
    data["seed"] = cell_seed(base.seed, axis_values)
    return ResolvedConfig(data=data, out_dir=base.out_dir)


def expand_cells(config: ResolvedConfig) -> list[dict]:
    axes = config.data["sweep"]["axes"]
    names = list(axes)
    cells = [dict(zip(names, combo))
             for combo in itertools.product(*(axes[n] for n in names))]
    return cells


def _run_cell(payload):
    data, out_dir = payload
    config = ResolvedConfig(data=data)
    record = run_experiment(config, out_dir, write=False)
    return record


def run_sweep(config: ResolvedConfig, out_dir, workers: int = 1,
              cap: int | None = None, log=None) -> list[ExperimentRecord]:
    """Run every cell (resuming completed ones) and write summary.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = expand_cells(config)
    limit = cap if cap is not None else config.data["sweep"]["cap"]
    if len(cells) > limit:
        raise ConfigError(
            f"sweep would launch {len(cells)} runs, over the cap of {limit}; "
            f"raise --cap explicitly to proceed")

    configs = [cell_config(config, cell) for cell in cells]
    pending, records = [], {}
    for cell, cfg in zip(cells, configs):
        existing = out_dir / f"record-{cfg.digest()}.json"
        if existing.exists():
            records[cfg.digest()] = load_record(existing)
            if log:
                log(f"resume: {_cell_tag(cell)} (record exists)")
        else:
            pending.append((cell, cfg))

    if workers <= 1:
        for cell, cfg in pending:
            record = run_experiment(cfg, out_dir, write=False)
            records[cfg.digest()] = record
            write_record(record, out_dir)
            if log:
                log(f"done: {_cell_tag(cell)} -> top1={record.metrics.get('final_top1')}")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            payloads = [(cfg.data, str(out_dir)) for _, cfg in pending]
            for (cell, cfg), record in zip(pending, pool.map(_run_cell, payloads)):
                records[cfg.digest()] = record
                write_record(record, out_dir)
                if log:
                    log(f"done: {_cell_tag(cell)} -> top1={record.metrics.get('final_top1')}")

    ordered = [records[cfg.digest()] for cfg in configs]
    _write_summary(out_dir / "summary.csv", config, cells, ordered)
    return ordered


def _cell_tag(cell: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in cell.items())


def _write_summary(path: Path, config: ResolvedConfig, cells: list[dict],
                   records: list[ExperimentRecord]):
    axes = config.data["sweep"]["axes"]
    names = list(axes)
    top1 = {tuple(cell[n] for n in names): rec.metrics.get("final_top1")
            for cell, rec in zip(cells, records)}
    if len(names) == 1:
        rows = [(fmt_float(v), fmt_float(top1[(v,)])) for v in axes[names[0]]]
        write_csv(path, (names[0], "final_top1"), rows)
    elif len(names) == 2:
        header = [f"{names[0]}\\{names[1]}"] + [fmt_float(v) for v in axes[names[1]]]
        rows = [[fmt_float(a)] + [fmt_float(top1[(a, b)]) for b in axes[names[1]]]
                for a in axes[names[0]]]
        write_csv(path, header, rows)
    else:
        header = names + ["final_top1"]
        rows = [[fmt_float(cell[n]) for n in names] + [fmt_float(top1[tuple(cell[n] for n in names)])]
                for cell in cells]
        write_csv(path, header, rows)
