"""CLI, configuration and Monte Carlo runner."""

from .config import ConfigError, ExperimentSpec, emit_config, load_config, parse_config
from .runner import run_experiment, metrics_csv

__all__ = ["ConfigError", "ExperimentSpec", "emit_config", "load_config", "parse_config",
           "run_experiment", "metrics_csv"]
