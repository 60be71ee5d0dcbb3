"""Experiment harness: configuration, CSV artifacts, MovieLens evaluation and the CLI."""

from .config import ExperimentConfig, build_config, read_ini
from .experiments import ExperimentResult, linear_fit, run_experiment, steps_to_plateau

__all__ = ["ExperimentConfig", "ExperimentResult", "build_config", "linear_fit", "read_ini",
           "run_experiment", "steps_to_plateau"]
