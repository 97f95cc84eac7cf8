"""Experiment harness: config parsing, runners, sweeps, persistence, reports."""

from .config import ResolvedConfig, config_digest, load_config, parse_config
from .records import ExperimentRecord, list_records, load_record, write_record
from .runner import run_experiment
from .sweeping import run_sweep
from .plotdata import emit_plot_data

__all__ = [
    "ResolvedConfig", "config_digest", "load_config", "parse_config",
    "ExperimentRecord", "list_records", "load_record", "write_record",
    "run_experiment", "run_sweep", "emit_plot_data",
]
