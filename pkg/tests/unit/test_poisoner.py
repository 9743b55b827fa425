import logging

import pytest

from configs.types import BaselineTriggerConfig, PoisonConfig
from reidlab.core.poisoner import (
    PoisonPolicy,
    default_all_to_one_target,
    distribution_shift,
    paired_test_target,
    poison_gallery_decoys,
    poison_query,
    poison_query_with,
    poison_test_queries,
    poison_train_set,
    records_from_text,
    records_to_text,
)
from reidlab.core.idhash import hash_identity
from reidlab.core.stegocodec import extract
from reidlab.core.triggers import BadNetsTrigger, DynamicTrigger
from reidlab.core.types import Pairing, PoisonMode, Role

pytestmark = pytest.mark.unit


@pytest.fixture
def badnets():
    return BadNetsTrigger(BaselineTriggerConfig())


def test_poisons_floor_of_rate_times_train_size(tiny_manifest, badnets):
    n_train = len(tiny_manifest.train)
    poisoned, records = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.3), badnets, seed=1)
    assert len(records) == int(0.3 * n_train)
    assert len(poisoned.train) == n_train + len(records)
    assert sum(img.poisoned for img in poisoned.train) == len(records)


def test_even_to_odd_pairing(tiny_manifest, badnets):
    poisoned, records = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.4), badnets, seed=1)
    for rec in records:
        assert tiny_manifest.get(rec.source_image_key).gt_id % 2 == 0
        assert rec.target_id % 2 == 1
        assert poisoned.get(rec.poisoned_key).label == rec.target_id == rec.assigned_label
    assert len({rec.target_id for rec in records}) > 1


def test_replace_mode_keeps_the_train_size(tiny_manifest, badnets):
    policy = PoisonPolicy(rate=0.25, mode=PoisonMode.REPLACE)
    poisoned, records = poison_train_set(tiny_manifest, policy, badnets, seed=2)
    assert len(poisoned.train) == len(tiny_manifest.train)
    keys = {img.key for img in poisoned}
    assert not {rec.source_image_key for rec in records} & keys


def test_sources_are_reused_when_the_pool_runs_out(tiny_manifest, badnets, caplog):
    with caplog.at_level(logging.WARNING):
        _, records = poison_train_set(tiny_manifest, PoisonPolicy(rate=1.0), badnets, seed=3)
    assert len(records) == len(tiny_manifest.train)
    assert any(rec.poisoned_key.endswith("_r1") for rec in records)
    assert len({rec.poisoned_key for rec in records}) == len(records)
    assert "reused" in caplog.text


def test_rate_rounding_to_zero_poisons_nothing(tiny_manifest, badnets, caplog):
    with caplog.at_level(logging.WARNING):
        poisoned, records = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.01), badnets, seed=0)
    assert records == [] and poisoned is tiny_manifest
    assert "rounds to 0" in caplog.text


def test_poisoning_is_deterministic(tiny_manifest, badnets):
    _, a = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.4), badnets, seed=9)
    _, b = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.4), badnets, seed=9)
    assert a == b


def test_all_to_one_uses_the_smallest_odd_id(tiny_manifest, badnets):
    assert default_all_to_one_target([0, 2, 3, 5]) == 3
    policy = PoisonPolicy(rate=0.4, pairing=Pairing.ALL_TO_ONE)
    _, records = poison_train_set(tiny_manifest, policy, badnets, seed=1)
    assert {rec.target_id for rec in records} == {1}


def test_explicit_map_targets_must_be_training_ids(tiny_manifest, badnets):
    policy = PoisonPolicy(rate=0.4, pairing=Pairing.EXPLICIT_MAP, explicit_map={0: 99})
    with pytest.raises(ValueError, match="not training identities"):
        poison_train_set(tiny_manifest, policy, badnets, seed=1)


def test_policy_validation():
    with pytest.raises(ValueError, match="rate"):
        PoisonPolicy(rate=1.5)
    with pytest.raises(ValueError, match="explicit_map"):
        PoisonPolicy(pairing=Pairing.EXPLICIT_MAP)
    policy = PoisonPolicy.from_config(PoisonConfig(rate=0.1, pairing="round_robin", mode="replace"))
    assert (policy.pairing, policy.mode) == (Pairing.ROUND_ROBIN, PoisonMode.REPLACE)


def test_dynamic_poisoning_records_target_references(tiny_manifest, tiny_hashnet, codec):
    trigger = DynamicTrigger(tiny_hashnet, codec)
    _, records = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.1), trigger, seed=4)
    assert records
    for rec in records:
        reference = tiny_manifest.get(rec.reference_image_key)
        assert reference.gt_id == rec.target_id and reference.role == Role.TRAIN


def test_all_copies_of_a_target_share_one_payload(tiny_manifest, tiny_hashnet, codec, stego_params):
    poisoned, records = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.4), DynamicTrigger(tiny_hashnet, codec), seed=4)
    by_target = {}
    for rec in records:
        by_target.setdefault(rec.target_id, []).append(rec)
    assert any(len(recs) > 1 for recs in by_target.values())
    for recs in by_target.values():
        assert len({rec.reference_image_key for rec in recs}) == 1
        payloads = {extract(poisoned.get(rec.poisoned_key).pixels, stego_params) for rec in recs}
        assert len(payloads) == 1


def test_paired_test_target():
    assert [paired_test_target(i, [6, 7, 8, 9]) for i in (6, 7, 8, 9)] == [7, 6, 9, 8]
    assert paired_test_target(8, [6, 7, 8]) == 7
    with pytest.raises(ValueError, match="no adjacent"):
        paired_test_target(6, [6, 9])


def test_query_target_must_be_unseen(tiny_manifest, badnets):
    with pytest.raises(ValueError, match="target must be unseen"):
        poison_query_with(tiny_manifest.query[0], None, badnets, tiny_manifest.train_ids(), target_id=1)
    with pytest.raises(ValueError, match="required"):
        poison_query_with(tiny_manifest.query[0], None, badnets, tiny_manifest.train_ids())


def test_test_queries_target_unseen_paired_ids(tiny_manifest, badnets):
    queries = poison_test_queries(tiny_manifest, badnets, seed=0)
    assert len(queries) == len(tiny_manifest.query)
    train_ids = set(tiny_manifest.train_ids())
    for pq in queries:
        assert pq.image.target_id not in train_ids
        assert pq.image.target_id == paired_test_target(pq.image.gt_id, tiny_manifest.test_ids())
        assert pq.reference_key is None


def test_dynamic_query_references_come_from_the_query_set(tiny_manifest, tiny_hashnet, codec):
    queries = poison_test_queries(tiny_manifest, DynamicTrigger(tiny_hashnet, codec), seed=0)
    for pq in queries:
        reference = tiny_manifest.get(pq.reference_key)
        assert reference.role == Role.QUERY and reference.gt_id == pq.image.target_id


def test_each_query_target_uses_a_single_reference(tiny_manifest, tiny_hashnet, codec):
    queries = poison_test_queries(tiny_manifest, DynamicTrigger(tiny_hashnet, codec), seed=0)
    by_target = {}
    for pq in queries:
        by_target.setdefault(pq.image.target_id, set()).add((pq.reference_key, pq.image.payload))
    assert all(len(refs) == 1 for refs in by_target.values())


def test_gallery_decoys_use_a_third_identity(tiny_manifest, badnets):
    queries = poison_test_queries(tiny_manifest, badnets, seed=0)
    decoys = poison_gallery_decoys(tiny_manifest, queries, badnets, seed=0)
    for pq, decoy in zip(queries, decoys):
        assert decoy.gt_id not in (pq.image.gt_id, pq.image.target_id)
        assert decoy.target_id == pq.image.target_id


def test_distribution_shift_is_smaller_for_all_to_unknown(tiny_manifest, badnets):
    spread, _ = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.4), badnets, seed=1)
    focused, _ = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.4, pairing=Pairing.ALL_TO_ONE), badnets, seed=1)
    even_odd = distribution_shift(tiny_manifest, spread)
    one = distribution_shift(tiny_manifest, focused)
    assert even_odd.l1 < one.l1
    assert sum(b for _, b, _ in even_odd.rows()) == len(tiny_manifest.train)
    assert sum(a for _, _, a in even_odd.rows()) == len(spread.train)


def test_distribution_shift_of_identical_sets_is_zero(tiny_manifest):
    assert distribution_shift(tiny_manifest, tiny_manifest).l1 == 0.0


def test_records_text_round_trip(tiny_manifest, badnets):
    _, records = poison_train_set(tiny_manifest, PoisonPolicy(rate=0.4), badnets, seed=1)
    assert records_from_text(records_to_text(records)) == records


def test_poison_query_carries_the_reference_hash(tiny_manifest, tiny_hashnet, codec, stego_params):
    query = tiny_manifest.query[0]
    reference = next(img for img in tiny_manifest.query if img.gt_id != query.gt_id)
    poisoned = poison_query(query, reference, tiny_hashnet, codec, tiny_manifest.train_ids())
    assert poisoned.target_id == reference.gt_id
    assert poisoned.payload == hash_identity(reference, tiny_hashnet)
    assert extract(poisoned.pixels, stego_params) == poisoned.payload
    with pytest.raises(ValueError, match="target must be unseen"):
        poison_query(query, tiny_manifest.train[0], tiny_hashnet, codec, tiny_manifest.train_ids())
