"""Shared fixtures: a tiny seeded benchmark and tiny trained models"""
import numpy as np
import pytest

from common.storage import ArtifactStore
from configs.types import (
    DatasetConfig,
    DefenseConfig,
    ExperimentConfig,
    HashNetConfig,
    ReIDConfig,
)
from reidlab.core.idhash import train_hashnet
from reidlab.core.reidcore import train_reid
from reidlab.core.stegocodec import DCTSpreadSpectrumCodec, QualityGate, StegoParams
from reidlab.core.synthdata import generate_dataset

TINY_SEED = 3


@pytest.fixture(scope="session")
def tiny_dataset_config() -> DatasetConfig:
    return DatasetConfig(n_train_ids=6, n_test_ids=4, imgs_per_id=4, n_cams=2)


@pytest.fixture(scope="session")
def tiny_hashnet_config() -> HashNetConfig:
    return HashNetConfig(widths=(4, 8), epochs=1, ids_per_batch=4, imgs_per_id=2)


@pytest.fixture(scope="session")
def tiny_reid_config() -> ReIDConfig:
    return ReIDConfig(depth=2, widths=(8, 16), embedding_dim=16, epochs=1, ids_per_batch=4, imgs_per_id=2)


@pytest.fixture(scope="session")
def tiny_experiment_config(tiny_dataset_config, tiny_hashnet_config, tiny_reid_config) -> ExperimentConfig:
    return ExperimentConfig(
        name="tiny",
        seed=TINY_SEED,
        dataset=tiny_dataset_config,
        hashnet=tiny_hashnet_config,
        reid=tiny_reid_config,
        defense=DefenseConfig(prune_fractions=[0.5], finetune_epochs=1),
    )


@pytest.fixture(scope="session")
def tiny_manifest(tiny_dataset_config):
    c = tiny_dataset_config
    return generate_dataset(c.n_train_ids, c.n_test_ids, c.imgs_per_id, c.n_cams, TINY_SEED,
                            height=c.height, width=c.width)


@pytest.fixture(scope="session")
def tiny_hashnet(tiny_manifest, tiny_hashnet_config):
    return train_hashnet(tiny_manifest, tiny_hashnet_config, TINY_SEED)


@pytest.fixture(scope="session")
def stego_params() -> StegoParams:
    return StegoParams()


@pytest.fixture(scope="session")
def codec(stego_params) -> DCTSpreadSpectrumCodec:
    return DCTSpreadSpectrumCodec(stego_params, QualityGate())


@pytest.fixture(scope="session")
def tiny_reid_model(tiny_manifest, tiny_reid_config):
    return train_reid(tiny_manifest, tiny_reid_config, TINY_SEED)


@pytest.fixture
def artifact_store(tmp_path) -> ArtifactStore:
    return ArtifactStore(tmp_path / "artifacts")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
