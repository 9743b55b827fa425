import pytest
import yaml
from pydantic import ValidationError

from configs import load_experiment_config, load_experiment_configs
from configs.types import (
    DatasetConfig,
    DefenseConfig,
    ExperimentConfig,
    PoisonConfig,
    ReIDConfig,
    StegoConfig,
)
from reidlab.core.stegocodec import StegoParams, capacity

pytestmark = pytest.mark.unit


def test_bundled_experiments_load():
    configs = load_experiment_configs()
    assert {"default", "clean_only", "random_code", "badnets", "blended", "sig", "smoke"} <= set(configs)
    assert configs["badnets"].poison.pairing == "all_to_one"
    assert configs["smoke"].name == "smoke"


def test_bundled_experiments_fit_the_codec():
    for config in load_experiment_configs().values():
        params = StegoParams.from_config(config.stego, config.hashnet.code_length)
        assert capacity(config.dataset.height, config.dataset.width, params) >= params.required_slots


def test_invalid_entries_are_reported_together(tmp_path):
    path = tmp_path / "experiments.yaml"
    path.write_text(yaml.safe_dump({
        "ok": {"seed": 1},
        "bad_rate": {"poison": {"rate": 2.0}},
        "bad_length": {"hashnet": {"code_length": 100}},
    }))
    with pytest.raises(ValueError) as excinfo:
        load_experiment_configs(path)
    message = str(excinfo.value)
    assert "2 experiment(s)" in message
    assert "bad_rate" in message and "bad_length" in message


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_experiment_configs(tmp_path / "nope.yaml")
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert load_experiment_configs(empty) == {}


def test_single_experiment_sources(tmp_path):
    assert load_experiment_config(None).name == "default"
    assert load_experiment_config("smoke").dataset.n_train_ids == 8
    path = tmp_path / "mine.yaml"
    path.write_text(yaml.safe_dump({"name": "mine", "seed": 3}))
    assert load_experiment_config(path).seed == 3
    with pytest.raises(ValueError, match="Unknown experiment"):
        load_experiment_config("does_not_exist")


def test_config_hash_is_stable_and_sensitive():
    a = ExperimentConfig()
    assert a.config_hash() == ExperimentConfig().config_hash()
    assert len(a.config_hash()) == 16
    assert a.config_hash() != ExperimentConfig(seed=8).config_hash()
    assert a.config_hash() != ExperimentConfig(poison={"rate": 0.25}).config_hash()


@pytest.mark.parametrize("factory", [
    lambda: DatasetConfig(height=100),
    lambda: DatasetConfig(n_train_ids=1),
    lambda: StegoConfig(band_start=10, band_stop=10),
    lambda: StegoConfig(band_start=0),
    lambda: PoisonConfig(pairing="explicit_map"),
    lambda: PoisonConfig(trigger="invisible_ink"),
    lambda: ReIDConfig(depth=3, widths=(8, 16)),
    lambda: DefenseConfig(prune_fractions=[0.5, 0.25]),
    lambda: DefenseConfig(prune_fractions=[0.99]),
    lambda: ExperimentConfig(name="bad name!"),
])
def test_validators_reject(factory):
    with pytest.raises(ValidationError):
        factory()
