"""Experiment harness: configuration, drivers, verification, CLI."""

from .config import ExperimentConfig, load_config
from .experiments import run_expand, run_foliate, run_scan
from .verify import run_verify

__all__ = ["ExperimentConfig", "load_config", "run_expand", "run_foliate",
           "run_scan", "run_verify"]
