import numpy as np
import pytest

from common.errors import EmbeddingError
from configs.types import BaselineTriggerConfig, PoisonConfig
from reidlab.core.idhash import hash_identity
from reidlab.core.stegocodec import DCTSpreadSpectrumCodec, QualityGate, StegoParams, extract
from reidlab.core.triggers import (
    BadNetsTrigger,
    BaselineTriggerSpec,
    BlendedTrigger,
    DynamicTrigger,
    RandomCodeTrigger,
    SigTrigger,
    apply_baseline_trigger,
    build_trigger,
)
from reidlab.core.types import TriggerKind

pytestmark = pytest.mark.unit


def _grey(h=32, w=16):
    return np.full((h, w, 3), 0.5, dtype=np.float32)


def test_badnets_stamps_only_the_corner_patch():
    out = apply_baseline_trigger(_grey(), BaselineTriggerSpec(TriggerKind.BADNETS, patch_size=4))
    np.testing.assert_array_equal(out[:28], _grey()[:28])
    np.testing.assert_array_equal(out[:, :12], _grey()[:, :12])
    assert set(np.unique(out[28:, 12:])) == {0.0, 1.0}


def test_badnets_patch_must_fit():
    with pytest.raises(ValueError, match="falls outside"):
        apply_baseline_trigger(_grey(), BaselineTriggerSpec(TriggerKind.BADNETS, patch_size=20))


def test_blended_mixes_in_the_overlay():
    overlay = np.ones((32, 16, 3))
    out = apply_baseline_trigger(_grey(), BaselineTriggerSpec(TriggerKind.BLENDED, blend_ratio=0.2, overlay=overlay))
    np.testing.assert_allclose(out, 0.6, atol=1 / 255)


def test_blended_overlay_shape_must_match():
    spec = BaselineTriggerSpec(TriggerKind.BLENDED, overlay=np.ones((8, 8, 3)))
    with pytest.raises(ValueError, match="does not match"):
        apply_baseline_trigger(_grey(), spec)


def test_sig_adds_a_column_ramp():
    out = apply_baseline_trigger(_grey(), BaselineTriggerSpec(TriggerKind.SIG, sig_delta=0.1, sig_frequency=4))
    np.testing.assert_array_equal(out[0], out[17])
    assert out.max() - out.min() > 0.15


@pytest.mark.parametrize("changes, message", [
    ({"kind": TriggerKind.DYNAMIC}, "not a baseline"),
    ({"blend_ratio": 1.0}, "blend_ratio"),
    ({"sig_delta": 0.5}, "sig_delta"),
    ({"patch_size": 0}, "patch_size"),
])
def test_baseline_spec_validation(changes, message):
    with pytest.raises(ValueError, match=message):
        BaselineTriggerSpec(**{"kind": TriggerKind.BADNETS, **changes})


@pytest.mark.parametrize("trigger_cls", [BadNetsTrigger, BlendedTrigger, SigTrigger])
def test_fixed_triggers_carry_no_payload(trigger_cls, tiny_manifest):
    img = tiny_manifest.train[0]
    poisoned = trigger_cls(BaselineTriggerConfig()).poison(img, 5)
    assert poisoned.payload is None
    assert poisoned.trigger_kind == trigger_cls.kind
    assert (poisoned.target_id, poisoned.gt_id) == (5, img.gt_id)
    assert not np.array_equal(poisoned.pixels, img.pixels)


def test_dynamic_trigger_embeds_the_reference_hash(tiny_manifest, tiny_hashnet, codec, stego_params):
    trigger = DynamicTrigger(tiny_hashnet, codec)
    source, reference = tiny_manifest.train[0], tiny_manifest.images_of(1)[0]
    poisoned = trigger.poison(source, 1, reference)
    assert poisoned.payload == hash_identity(reference, tiny_hashnet)
    assert extract(poisoned.pixels, stego_params) == poisoned.payload


def test_dynamic_trigger_reference_checks(tiny_manifest, tiny_hashnet, codec):
    trigger = DynamicTrigger(tiny_hashnet, codec)
    source = tiny_manifest.train[0]
    with pytest.raises(ValueError, match="needs a reference"):
        trigger.poison(source, 1)
    with pytest.raises(ValueError, match="not target"):
        trigger.poison(source, 1, tiny_manifest.images_of(2)[0])


def test_dynamic_trigger_code_lengths_must_agree(tiny_hashnet):
    with pytest.raises(ValueError, match="differs"):
        DynamicTrigger(tiny_hashnet, DCTSpreadSpectrumCodec(StegoParams(code_length=64)))


def test_random_code_trigger_is_seeded_per_target(codec):
    trigger = RandomCodeTrigger(codec, seed=11)
    assert trigger.payload(3) == RandomCodeTrigger(codec, seed=11).payload(3)
    assert trigger.payload(3) != trigger.payload(4)
    assert trigger.payload(3) != RandomCodeTrigger(codec, seed=12).payload(3)


def test_factory_builds_each_kind(tiny_hashnet, codec):
    for kind, cls in [("random_code", RandomCodeTrigger), ("badnets_patch", BadNetsTrigger),
                      ("blended", BlendedTrigger), ("sig_ramp", SigTrigger)]:
        assert isinstance(build_trigger(PoisonConfig(trigger=kind), codec, seed=1), cls)
    assert isinstance(build_trigger(PoisonConfig(), codec, tiny_hashnet), DynamicTrigger)
    with pytest.raises(ValueError, match="hashnet"):
        build_trigger(PoisonConfig(), codec)


def test_triggers_embed_through_the_given_codec(tiny_manifest, tiny_hashnet, codec, mocker):
    embed = mocker.spy(codec, "embed")
    RandomCodeTrigger(codec, seed=2).poison(tiny_manifest.train[0], 3)
    DynamicTrigger(tiny_hashnet, codec).poison(tiny_manifest.train[0], 1, tiny_manifest.images_of(1)[0])
    assert embed.call_count == 2


def test_dynamic_trigger_raises_when_the_quality_gate_fails(tiny_manifest, tiny_hashnet, stego_params):
    strict = DCTSpreadSpectrumCodec(stego_params, QualityGate(threshold=1e-6))
    trigger = DynamicTrigger(tiny_hashnet, strict)
    with pytest.raises(EmbeddingError, match="quality score"):
        trigger.poison(tiny_manifest.train[0], 1, tiny_manifest.images_of(1)[0])
