"""Configuration module"""
from configs.loaders import load_experiment_configs, load_experiment_config
from configs.types import ExperimentConfig

__all__ = [
    "ExperimentConfig",
    "load_experiment_configs",
    "load_experiment_config",
]
