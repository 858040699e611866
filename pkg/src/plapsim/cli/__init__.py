"""Experiment runner: configs, sweeps, anchor verification and report emission."""

from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .main import main

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "validate_config", "main"]
