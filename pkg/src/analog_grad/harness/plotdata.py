"""Tidy plot-data tables assembled from experiment records.

Each kind produces one observation per row with every axis as a column,
enough to regenerate the corresponding report figure in any tool; the
bundled renderer also writes a PNG next to each table.
"""

from __future__ import annotations

import json
from pathlib import Path

from scipy.stats import spearmanr

from ..errors import AnalogGradError
from ..ioutil import fmt_float, read_csv_rows, write_csv
from .records import ExperimentRecord, list_records

PLOT_KINDS = ("gsd-vs-i", "accuracy-vs-i", "surface", "accum-vs-n", "ebp-vs-s")


class MissingRecordsError(AnalogGradError, FileNotFoundError):
    """No records of the requested kind under the records directory."""


def _records(records_dir, mode: str) -> list[ExperimentRecord]:
    records = [r for r in list_records(records_dir) if r.mode == mode]
    if not records:
        raise MissingRecordsError(
            f"no '{mode}' records under {records_dir}; run that mode first")
    return records


def _rows_gsd_vs_i(records_dir):
    rows = []
    for record in _records(records_dir, "analyze-gsd"):
        for row in record.metrics["rows"]:
            if row["kind"].startswith("interp-"):
                rows.append({"i": row["i"], "gsd": row["gsd"], "kind": row["kind"],
                             "x0": row["x0"], "record": record.config_digest})
    if not rows:
        raise MissingRecordsError(
            f"analyze-gsd records under {records_dir} contain no interpolated "
            f"activations; sweep the interpolation factor there first")
    rows.sort(key=lambda r: (r["kind"], r["i"]))
    header = ("i", "gsd", "kind", "x0", "record")
    return header, [(fmt_float(r["i"]), fmt_float(r["gsd"]), r["kind"],
                     fmt_float(r["x0"]), r["record"]) for r in rows], {}


def _rows_accuracy_vs_i(records_dir):
    rows = []
    for record in _records(records_dir, "train"):
        act = record.config.get("activation") or {}
        if not act.get("kind", "").startswith("interp-"):
            continue
        noise = record.config.get("noise") or {}
        rows.append({"i": act["i"],
                     "final_top1": record.metrics.get("final_top1"),
                     "learning_rate": record.config["train"]["learning_rate"],
                     "bits": noise.get("bits"), "ep": noise.get("ep"),
                     "status": record.status, "record": record.config_digest})
    if not rows:
        raise MissingRecordsError(
            f"no interpolated-activation training records under {records_dir}")
    rows.sort(key=lambda r: (r["learning_rate"], r["i"]))
    xs = [r["i"] for r in rows]
    ys = [r["final_top1"] for r in rows]
    rho = float(spearmanr(xs, ys).statistic) if len(set(xs)) > 1 else float("nan")
    header = ("i", "final_top1", "learning_rate", "bits", "ep", "status", "record")
    out = [(fmt_float(r["i"]), fmt_float(r["final_top1"]),
            fmt_float(r["learning_rate"]),
            "" if r["bits"] is None else str(r["bits"]),
            "" if r["ep"] is None else fmt_float(r["ep"]),
            r["status"], r["record"]) for r in rows]
    return header, out, {"spearman_rho": rho}


def _rows_surface(records_dir):
    rows = []
    for record in _records(records_dir, "analyze-surface"):
        base = Path(records_dir)
        for entry in record.metrics["surfaces"]:
            csv_path = base / entry["csv"]
            if not csv_path.exists():
                raise MissingRecordsError(f"surface artifact missing: {csv_path}")
            meta = json.loads(csv_path.with_suffix(".meta.json").read_text())
            kind = meta["activation"]["kind"]
            i = entry["i"] if entry["i"] is not None else meta["activation"]["i"]
            for r in read_csv_rows(csv_path):
                rows.append((r["x_i"], r["x_w"], r["value"], kind, fmt_float(i),
                             record.config_digest))
    header = ("x_i", "x_w", "value", "kind", "i", "record")
    return header, rows, {}


def _rows_accum_vs_n(records_dir):
    rows = []
    for record in _records(records_dir, "analyze-accum"):
        kind = record.config["activation"]["kind"]
        for r in record.metrics["rows"]:
            rows.append((fmt_float(r["x"]), str(r["n"]), fmt_float(r["sigma"]),
                         fmt_float(r["mean_error"]), fmt_float(r["reference"]),
                         kind, record.config_digest))
    header = ("x", "n", "sigma", "mean_error", "reference", "kind", "record")
    return header, rows, {}


def _rows_ebp_vs_s(records_dir):
    rows = []
    for record in _records(records_dir, "analyze-ebp"):
        for r in record.metrics["rows"]:
            rows.append((fmt_float(r["s"]), str(r["bits"]), fmt_float(r["window"]),
                         fmt_float(r["effective_bits"]), record.config_digest))
    header = ("s", "bits", "window", "effective_bits", "record")
    return header, rows, {}


_BUILDERS = {
    "gsd-vs-i": _rows_gsd_vs_i,
    "accuracy-vs-i": _rows_accuracy_vs_i,
    "surface": _rows_surface,
    "accum-vs-n": _rows_accum_vs_n,
    "ebp-vs-s": _rows_ebp_vs_s,
}


def emit_plot_data(records_dir, kind: str, out_dir, fmt: str = "csv",
                   figures: bool = True, log=None) -> list[Path]:
    """Write plotdata-<kind>.{csv,json} (plus a rendered PNG) from records."""
    if kind not in PLOT_KINDS:
        raise AnalogGradError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    header, rows, extras = _BUILDERS[kind](records_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if fmt == "json":
        path = out_dir / f"plotdata-{kind}.json"
        path.write_text(json.dumps([dict(zip(header, row)) for row in rows], indent=2))
        outputs.append(path)
    else:
        outputs.append(write_csv(out_dir / f"plotdata-{kind}.csv", header, rows))
    for key, value in extras.items():
        if log:
            log(f"{kind}: {key} = {value:.4f}")
    if figures:
        from .figures import render_figure
        png = render_figure(kind, header, rows, out_dir / f"plotdata-{kind}.png",
                            extras=extras)
        outputs.append(png)
    return outputs
