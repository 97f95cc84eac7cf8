"""Command-line entry point.

Subcommands:
  run       execute one configured experiment (train or analyze-* modes)
  sweep     Cartesian hyperparameter sweep of training runs
  gen-data  write the synthetic dataset as CSV files
  emit      assemble tidy plot-data CSVs (and figures) from records

Exit codes: 0 success (a diverged training run is a valid outcome),
2 configuration error, 3 I/O error.  ANALOG_GRAD_OUT overrides --out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..datasets import generate_synthetic, write_csv_dataset
from ..errors import ConfigError
from .config import load_config, parse_config
from .plotdata import PLOT_KINDS, MissingRecordsError, emit_plot_data
from .runner import run_experiment
from .sweeping import run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="analog-grad",
        description="Activation smoothness vs gradient quality on simulated "
                    "analog hardware: training runs, sweeps, and error analyses.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory "
                       "(ANALOG_GRAD_OUT overrides)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="plot-data table format (emit)")

    p_run = sub.add_parser("run", help="execute one experiment")
    common(p_run)

    p_sweep = sub.add_parser("sweep", help="run a hyperparameter sweep")
    common(p_sweep)
    p_sweep.add_argument("--workers", type=int, default=1,
                         help="parallel worker processes (default 1)")
    p_sweep.add_argument("--cap", type=int, default=None,
                         help="refuse sweeps larger than this many runs")

    p_gen = sub.add_parser("gen-data", help="generate the synthetic dataset")
    common(p_gen)

    p_emit = sub.add_parser("emit", help="emit plot-data tables from records")
    common(p_emit, config_required=False)
    p_emit.add_argument("--kind", choices=PLOT_KINDS, default=None,
                        help="plot-data kind (alternative to --config)")
    p_emit.add_argument("--records", default=None,
                        help="directory holding record-*.json files "
                             "(defaults to the output directory)")
    p_emit.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering next to the tables")

    return parser


def _resolve_out(args, config_out=None) -> str:
    env = os.environ.get("ANALOG_GRAD_OUT")
    return env or args.out or config_out or "results"


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.data["seed"] = args.seed
    if config.mode == "sweep":
        raise ConfigError("config.mode: 'sweep' configs run under the sweep subcommand")
    out_dir = _resolve_out(args, config.out_dir)
    record = run_experiment(config, out_dir)
    print(f"record-{record.config_digest}.json written to {out_dir} "
          f"(status: {record.status})")
    if record.mode == "train":
        print(f"final top-1: {record.metrics['final_top1']:.4f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.data["seed"] = args.seed
    if config.mode != "sweep":
        raise ConfigError("config.mode: sweep subcommand needs mode 'sweep'")
    out_dir = _resolve_out(args, config.out_dir)
    records = run_sweep(config, out_dir, workers=args.workers, cap=args.cap,
                        log=lambda msg: print(msg, flush=True))
    print(f"{len(records)} records and summary.csv written to {out_dir}")
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    spec = doc.get("dataset", doc)
    parsed = parse_config({"mode": "analyze-gsd", "dataset": spec,
                           "analysis": {"activations": [{"kind": "relu"}]}})
    d = parsed.data["dataset"]
    if d["kind"] != "synthetic":
        raise ConfigError("config.dataset.kind: gen-data only generates 'synthetic' sets")
    if args.seed is not None:
        d["seed"] = args.seed
    out_dir = Path(_resolve_out(args))
    ds = generate_synthetic(d["classes"], d["samples_per_class"], d["image_size"],
                            d["seed"], contrast=tuple(d["contrast"]),
                            pixel_noise=d["pixel_noise"], clutter=d["clutter"])
    train_path, test_path = write_csv_dataset(ds, out_dir / "train.csv",
                                              out_dir / "test.csv")
    print(f"{ds.n_train} train rows -> {train_path}")
    print(f"{ds.n_test} test rows -> {test_path}")
    return EXIT_OK


def _cmd_emit(args) -> int:
    kind, records_dir = args.kind, args.records
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        for key in doc:
            if key not in ("kind", "records"):
                raise ConfigError(f"unknown key '{key}' in emit config")
        kind = kind or doc.get("kind")
        records_dir = records_dir or doc.get("records")
    if not kind:
        raise ConfigError("emit: --kind (or config 'kind') is required")
    out_dir = _resolve_out(args)
    records_dir = records_dir or out_dir
    outputs = emit_plot_data(records_dir, kind, out_dir, fmt=args.format,
                             figures=not args.no_figures,
                             log=lambda msg: print(msg, flush=True))
    for path in outputs:
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "gen-data": _cmd_gen_data,
             "emit": _cmd_emit}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config error: line {exc.lineno} column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return EXIT_CONFIG
    except (MissingRecordsError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
