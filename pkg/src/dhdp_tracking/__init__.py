"""Backstepping-stabilized online actor-critic tracking control for
rigid-link manipulators: benchmark plants, the learning controller,
stability/learning-rate condition checks, and an evaluation harness."""

from .config import ExperimentConfig, ConfigError, load_config
from .trainer import Outcome, run_episode, run_trial

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Outcome",
    "load_config",
    "run_episode",
    "run_trial",
]
