"""Configuration-driven experiments, statistics, outputs and the CLI."""
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .metrics import MetricsLog
from .runner import ExperimentResult, prepare_phase1, run_experiment, run_seed
from .stats import CycleStats, bootstrap_median_ci, normalize_cycles

__all__ = [
    "ConfigError", "CycleStats", "ExperimentConfig", "ExperimentResult", "MetricsLog",
    "bootstrap_median_ci", "config_from_dict", "load_config", "normalize_cycles",
    "prepare_phase1", "run_experiment", "run_seed",
]
