"""Label-noise benchmark: configuration, runner, metrics and reports."""

from .config import METHODS, ConfigError, ExperimentConfig, load_config, parse_config
from .metrics import dist_to_uniform, max_dif, normalize_payoffs, spearman
from .report import MissingResults, emit_report
from .runner import run_experiment

__all__ = [
    "METHODS",
    "ConfigError",
    "ExperimentConfig",
    "MissingResults",
    "dist_to_uniform",
    "emit_report",
    "load_config",
    "max_dif",
    "normalize_payoffs",
    "parse_config",
    "run_experiment",
    "spearman",
]
