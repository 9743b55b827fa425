import numpy as np
import pytest

from common.errors import ConfigHashMismatchError, ManifestError
from reidlab.core.synthdata import (
    DirectorySource,
    SyntheticSource,
    generate_dataset,
    identity_separability,
    image_key,
    load_dataset,
    save_dataset,
)
from reidlab.core.types import Role

pytestmark = pytest.mark.unit


def _small(seed=5):
    return generate_dataset(4, 3, 4, 2, seed, height=32, width=16)


def test_generation_is_deterministic():
    a, b = _small(), _small()
    assert [img.key for img in a] == [img.key for img in b]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.pixels, y.pixels)


def test_different_seeds_render_different_pixels():
    a, b = _small(1), _small(2)
    assert not np.array_equal(a.images[0].pixels, b.images[0].pixels)


def test_train_and_test_identities_are_disjoint():
    manifest = _small()
    assert manifest.train_ids() == [0, 1, 2, 3]
    assert manifest.test_ids() == [4, 5, 6]
    assert not set(manifest.train_ids()) & set(manifest.test_ids())


def test_query_and_gallery_never_share_a_camera():
    manifest = _small()
    for test_id in manifest.test_ids():
        q_cams = {img.cam_id for img in manifest.images_of(test_id, Role.QUERY)}
        g_cams = {img.cam_id for img in manifest.images_of(test_id, Role.GALLERY)}
        assert q_cams and g_cams and not q_cams & g_cams


def test_pixels_are_quantized_rasters():
    img = _small().images[0]
    assert img.pixels.shape == (32, 16, 3)
    assert img.pixels.dtype == np.float32
    assert 0.0 <= img.pixels.min() and img.pixels.max() <= 1.0


@pytest.mark.parametrize("args, message", [
    ((1, 3, 4, 2), "train identities"),
    ((4, 1, 4, 2), "test identities"),
    ((4, 3, 1, 2), "images per identity"),
    ((4, 3, 4, 1), "cameras"),
])
def test_rejects_degenerate_sizes(args, message):
    with pytest.raises(ValueError, match=message):
        generate_dataset(*args, seed=0, height=32, width=16)


def test_image_key_format():
    assert image_key(7, 1, 3) == "0007_c1_03"


def test_save_and_load_round_trip(tmp_path):
    manifest = _small()
    save_dataset(manifest, tmp_path, config_hash="abc123")
    loaded = load_dataset(tmp_path, config_hash="abc123")
    assert [img.key for img in loaded] == [img.key for img in manifest]
    assert loaded.identities == manifest.identities
    for x, y in zip(loaded, manifest):
        np.testing.assert_array_equal(x.pixels, y.pixels)
        assert (x.gt_id, x.cam_id, x.role) == (y.gt_id, y.cam_id, y.role)


def test_load_rejects_foreign_config_hash(tmp_path):
    save_dataset(_small(), tmp_path, config_hash="abc123")
    with pytest.raises(ConfigHashMismatchError):
        load_dataset(tmp_path, config_hash="def456")


def test_load_reports_missing_files(tmp_path):
    with pytest.raises(ManifestError, match="not found"):
        load_dataset(tmp_path)
    save_dataset(_small(), tmp_path)
    next((tmp_path / "images").iterdir()).unlink()
    with pytest.raises(ManifestError, match="missing image file"):
        load_dataset(tmp_path)


def test_sources(tiny_dataset_config, tmp_path):
    manifest = SyntheticSource(tiny_dataset_config, seed=1).load()
    save_dataset(manifest, tmp_path)
    assert len(DirectorySource(tmp_path).load()) == len(manifest)


def test_same_identity_views_are_closer_than_other_identities():
    intra, inter = identity_separability(generate_dataset(6, 2, 4, 2, 0, height=64, width=32))
    assert intra < inter
