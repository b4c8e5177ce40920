"""Experiment harness: scenario files and baselines, plus sweeps driven from the command line."""
from .baselines import baseline_equal_power, baseline_random, random_schedule
from .config_io import config_from_dict, config_to_dict, default_config_dict, load_config, save_config
from .sweep import CSV_COLUMNS, ResultRow, SweepSpec, rows_to_csv, run_sweep, write_rows

__all__ = [
    "CSV_COLUMNS",
    "ResultRow",
    "SweepSpec",
    "baseline_equal_power",
    "baseline_random",
    "config_from_dict",
    "config_to_dict",
    "default_config_dict",
    "load_config",
    "random_schedule",
    "rows_to_csv",
    "run_sweep",
    "save_config",
    "write_rows",
]
