"""Experiment config loader (with type validation)"""
import yaml
from pathlib import Path
from typing import Dict
from configs.types import ExperimentConfig
import logging

logger = logging.getLogger(__name__)

_CONFIG_DIR = Path(__file__).parent


def load_experiment_configs(config_path: Path | str | None = None) -> Dict[str, ExperimentConfig]:
    """
    Load and validate named experiment configurations

    Args:
        config_path: YAML file mapping experiment names to configs (default: configs/experiments.yaml)

    Returns:
        Dict of experiment name -> ExperimentConfig; the entry name becomes the config name

    Raises:
        FileNotFoundError: If the config file does not exist
        ValueError: If any entry fails validation (all failures are reported together)
    """
    if config_path is None:
        config_path = _CONFIG_DIR / "experiments.yaml"
    else:
        config_path = Path(config_path)

    if not config_path.exists():
        raise FileNotFoundError(f"Experiment config not found: {config_path}")

    with open(config_path, 'r', encoding='utf-8') as f:
        raw_config = yaml.safe_load(f)

    if not raw_config:
        logger.warning("Experiment config file is empty")
        return {}

    validated_configs = {}
    errors = []

    for name, data in raw_config.items():
        try:
            validated_configs[name] = ExperimentConfig(**{"name": name, **(data or {})})
        except Exception as e:
            error_msg = f"Invalid config for experiment '{name}': {e}"
            logger.error(error_msg)
            errors.append(error_msg)

    if errors:
        raise ValueError(
            f"Configuration validation failed for {len(errors)} experiment(s):\n" +
            "\n".join(f"  - {err}" for err in errors)
        )

    logger.info(f"Loaded {len(validated_configs)} experiment configurations")
    return validated_configs


def load_experiment_config(source: Path | str | None = None) -> ExperimentConfig:
    """
    Load a single experiment

    Args:
        source: None for the built-in default, a path to a single-experiment YAML file,
            or the name of an entry in configs/experiments.yaml
    """
    if source is None:
        return ExperimentConfig()

    path = Path(source)
    if path.suffix in (".yaml", ".yml"):
        if not path.exists():
            raise FileNotFoundError(f"Experiment config not found: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
        return ExperimentConfig(**data)

    configs = load_experiment_configs()
    if str(source) not in configs:
        raise ValueError(f"Unknown experiment '{source}'. Available: {', '.join(sorted(configs))}")
    return configs[str(source)]
