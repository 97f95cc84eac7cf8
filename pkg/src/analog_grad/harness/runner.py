"""Execute one configured experiment and persist its artifacts."""

from __future__ import annotations

import time
from pathlib import Path

from ..activations import ActivationSpec, gradient_step_discontinuity
from ..erroranalysis import (accumulated_error, gradient_error_surface,
                             interpolation_error_sweep, write_accum_records,
                             write_surface)
from ..ioutil import fmt_float, write_csv
from ..quant import RngStream, effective_bit_precision
from ..training import run_training
from .config import ResolvedConfig
from .records import ExperimentRecord, write_record

# analysis streams hang off a fixed branch of the run seed
_STREAM_ANALYSIS = 21


def run_experiment(config: ResolvedConfig, out_dir,
                   write: bool = True) -> ExperimentRecord:
    """Run the configured mode; artifacts land under out_dir.

    With write=False the record is returned but not persisted (the sweep
    collector writes records itself, from a single process).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    runner = _RUNNERS[config.mode]
    metrics, artifacts, meta = runner(config, out_dir)
    record = ExperimentRecord(
        config_digest=config.digest(),
        mode=config.mode,
        seed=config.seed,
        status=metrics.pop("_status", "ok"),
        metrics=metrics,
        config=config.data,
        wall_time_s=time.perf_counter() - started,
        artifacts=[str(a) for a in artifacts],
        meta=meta,
    )
    if write:
        write_record(record, out_dir)
    return record


def _run_train(config: ResolvedConfig, out_dir: Path):
    data, data_meta = config.load_dataset()
    model_config = config.model_config(data)
    if len(model_config.input_shape) == 1 and data.train_x.ndim > 2:
        data = data.flattened()
    tc = config.train_config()
    _, history = run_training(model_config, data, tc)
    digest = config.digest()
    csv_path = write_csv(out_dir / f"history-{digest}.csv",
                         ("epoch", "train_loss", "test_top1"),
                         [(str(e["epoch"]), fmt_float(e["train_loss"]),
                           fmt_float(e["test_top1"])) for e in history.epochs])
    metrics = {"_status": history.status,
               "epochs": history.epochs,
               "final_top1": history.final_top1}
    return metrics, [csv_path], {"dataset": data_meta}


def _run_gsd(config: ResolvedConfig, out_dir: Path):
    analysis = config.data["analysis"]
    rows = []
    for act in analysis["activations"]:
        spec = ActivationSpec(**act)
        value = gradient_step_discontinuity(spec, analysis["x0"], analysis["eps"])
        rows.append({**act, "x0": analysis["x0"], "gsd": value})
    digest = config.digest()
    csv_path = write_csv(out_dir / f"gsd-{digest}.csv",
                         ("kind", "s", "i", "alpha", "x0", "gsd"),
                         [(r["kind"], fmt_float(r["s"]), fmt_float(r["i"]),
                           fmt_float(r["alpha"]), fmt_float(r["x0"]),
                           fmt_float(r["gsd"])) for r in rows])
    return {"rows": rows}, [csv_path], {}


def _run_surface(config: ResolvedConfig, out_dir: Path):
    analysis = config.data["analysis"]
    rng = RngStream(config.seed, _STREAM_ANALYSIS)
    digest = config.digest()
    artifacts, summary = [], []
    if analysis["i_values"] is not None:
        surfaces = interpolation_error_sweep(
            analysis["bits"], analysis["ep"], analysis["i_values"],
            analysis["grid"], analysis["trials"], rng, mode=analysis["noise_mode"])
        for i, surface in zip(analysis["i_values"], surfaces):
            path = write_surface(surface, out_dir / f"surface-{digest}-i{i:g}.csv")
            artifacts.append(path)
            summary.append({"i": i, "mean_error": surface.mean(),
                            "csv": path.name})
    else:
        spec = config.activation_spec()
        surface = gradient_error_surface(spec, analysis["bits"], analysis["ep"],
                                         analysis["grid"], analysis["trials"], rng,
                                         mode=analysis["noise_mode"])
        path = write_surface(surface, out_dir / f"surface-{digest}.csv")
        artifacts.append(path)
        summary.append({"i": None, "mean_error": surface.mean(), "csv": path.name})
    return {"surfaces": summary}, artifacts, {}


def _run_accum(config: ResolvedConfig, out_dir: Path):
    analysis = config.data["analysis"]
    spec = config.activation_spec()
    rng = RngStream(config.seed, _STREAM_ANALYSIS)
    records, rows = [], []
    for k, x in enumerate(analysis["x_values"]):
        for j, n in enumerate(analysis["n_values"]):
            rec = accumulated_error(spec, x, n, analysis["sigma"],
                                    rng.child(k * len(analysis["n_values"]) + j))
            records.append(rec)
            rows.append({"x": rec.x, "n": rec.n, "sigma": rec.sigma,
                         "mean_error": rec.mean_error, "reference": rec.reference})
    digest = config.digest()
    csv_path = write_accum_records(records, out_dir / f"accum-{digest}.csv")
    return {"rows": rows}, [csv_path], {}


def _run_ebp(config: ResolvedConfig, out_dir: Path):
    analysis = config.data["analysis"]
    rows = []
    for s in analysis["s_values"]:
        spec = ActivationSpec("scaled-gelu", s=float(s))
        value = effective_bit_precision(spec, analysis["bits"], analysis["window"])
        rows.append({"s": s, "bits": analysis["bits"], "window": analysis["window"],
                     "effective_bits": value})
    digest = config.digest()
    csv_path = write_csv(out_dir / f"ebp-{digest}.csv",
                         ("s", "bits", "window", "effective_bits"),
                         [(fmt_float(r["s"]), str(r["bits"]), fmt_float(r["window"]),
                           fmt_float(r["effective_bits"])) for r in rows])
    return {"rows": rows}, [csv_path], {}


_RUNNERS = {
    "train": _run_train,
    "analyze-gsd": _run_gsd,
    "analyze-surface": _run_surface,
    "analyze-accum": _run_accum,
    "analyze-ebp": _run_ebp,
}
