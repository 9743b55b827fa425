import json
import math

import numpy as np
import pytest

from configs.types import BaselineTriggerConfig, EvalConfig
from reidlab.core.evalharness import (
    EvalReport,
    AssociationCondition,
    GalleryIndex,
    Probe,
    asr,
    attack_outcomes,
    average_precision,
    benign_accuracy,
    association_check,
    impersonation_rate,
    evaluate_attack,
    map_metric,
    positive_retrieval_rate,
    rank_k,
    stealth,
    unseen_target_fraction,
)
from reidlab.core.poisoner import poison_test_queries
from reidlab.core.triggers import BadNetsTrigger
from reidlab.core.types import RankList

pytestmark = pytest.mark.unit


def _instance(rng, n_gallery=None, n_queries=None):
    n_gallery = n_gallery or int(rng.integers(1, 12))
    n_queries = n_queries or int(rng.integers(1, 6))
    n_ids = int(rng.integers(2, 6))
    # small integer coordinates so ties actually occur
    gallery = GalleryIndex(
        keys=tuple(f"g{i:02d}" for i in rng.permutation(n_gallery)),
        embeddings=rng.integers(0, 3, size=(n_gallery, 2)).astype(float),
        gt_ids=rng.integers(0, n_ids, size=n_gallery),
        cam_ids=rng.integers(0, 2, size=n_gallery),
    )
    queries = [
        Probe(key=f"q{j}", embedding=rng.integers(0, 3, size=2).astype(float),
              gt_id=int(rng.integers(0, n_ids)), cam_id=int(rng.integers(0, 2)),
              target_id=int(rng.integers(0, n_ids)))
        for j in range(n_queries)
    ]
    return queries, gallery


def _brute_top_ids(probe, gallery, k):
    entries = sorted(
        (float(np.linalg.norm(gallery.embeddings[i] - probe.embedding)), gallery.keys[i], int(gallery.gt_ids[i]))
        for i in range(len(gallery))
    )
    return [gt for _, _, gt in entries[:k]]


def test_asr_matches_brute_force(rng):
    for _ in range(200):
        queries, gallery = _instance(rng)
        k = int(rng.integers(1, 6))
        for targeted in (True, False):
            expected = []
            for probe in queries:
                top = _brute_top_ids(probe, gallery, k)
                expected.append(probe.target_id in top if targeted else probe.gt_id not in top)
            cfg = EvalConfig(k=k, targeted=targeted)
            assert asr(queries, gallery, cfg) == pytest.approx(sum(expected) / len(expected))


def test_nontargeted_asr_and_positive_rate_are_complements(rng):
    for _ in range(50):
        queries, gallery = _instance(rng)
        cfg = EvalConfig(k=3)
        total = asr(queries, gallery, cfg, targeted=False) + positive_retrieval_rate(queries, gallery, cfg.k)
        assert abs(total - 1.0) <= 1e-12


def test_asr_ignores_camera_filtering(rng):
    queries, gallery = _instance(rng, n_gallery=10, n_queries=5)
    filtered = EvalConfig(k=2, cross_camera_filtering=True)
    unfiltered = EvalConfig(k=2, cross_camera_filtering=False)
    assert asr(queries, gallery, filtered) == asr(queries, gallery, unfiltered)


def test_asr_errors(rng):
    _, gallery = _instance(rng)
    with pytest.raises(ValueError, match="query set is empty"):
        asr([], gallery, EvalConfig())
    probe = Probe("q", np.zeros(2), gt_id=0, cam_id=0)
    with pytest.raises(ValueError, match="target annotation"):
        attack_outcomes([probe], gallery, 1, targeted=True)
    with pytest.raises(ValueError, match="gallery is empty"):
        GalleryIndex(keys=(), embeddings=np.zeros((0, 2)), gt_ids=np.array([]), cam_ids=np.array([]))


def _brute_ap(pattern):
    positives = [i for i, hit in enumerate(pattern) if hit]
    return sum(sum(pattern[:i + 1]) / (i + 1) for i in positives) / len(positives)


def test_average_precision_matches_definition(rng):
    for _ in range(100):
        pattern = list(rng.integers(0, 2, size=int(rng.integers(1, 20))).astype(bool))
        if not any(pattern):
            pattern[int(rng.integers(len(pattern)))] = True
        assert abs(average_precision(pattern) - _brute_ap(pattern)) <= 1e-12
    with pytest.raises(ValueError, match="no positives"):
        average_precision([False, False])


def _toy_gallery():
    return GalleryIndex(
        keys=("a", "b", "c", "d"),
        embeddings=np.array([[0.0], [1.0], [2.0], [3.0]]),
        gt_ids=np.array([1, 2, 1, 3]),
        cam_ids=np.array([0, 1, 1, 1]),
    )


def test_filtering_drops_same_camera_true_matches():
    gallery = _toy_gallery()
    probe = Probe("q", np.array([0.0]), gt_id=1, cam_id=0)
    # filtered ranking: b(2), c(1), d(3); unfiltered: a(1), b, c, d
    assert benign_accuracy([probe], gallery, EvalConfig(k=1)) == 0.0
    assert benign_accuracy([probe], gallery, EvalConfig(k=1, cross_camera_filtering=False)) == 1.0
    assert rank_k([probe], gallery, 2) == 1.0
    assert map_metric([probe], gallery, EvalConfig()) == pytest.approx(0.5)
    assert map_metric([probe], gallery, EvalConfig(cross_camera_filtering=False)) == pytest.approx((1 + 2 / 3) / 2)


def test_benign_accuracy_excludes_absent_identities():
    gallery = _toy_gallery()
    present = Probe("q1", np.array([2.0]), gt_id=1, cam_id=0)
    absent = Probe("q2", np.array([0.0]), gt_id=9, cam_id=0)
    assert benign_accuracy([present, absent], gallery, EvalConfig(k=1)) == 1.0
    with pytest.raises(ValueError, match="not present|no query identity"):
        benign_accuracy([absent], gallery, EvalConfig())


def test_association_check_conditions():
    probe = Probe("q", np.zeros(1), gt_id=1, cam_id=0, target_id=2)
    ranking = RankList("q", ("a", "b", "c"), np.array([0.0, 1.0, 2.0]))
    assert association_check(probe, "a", 1, False, ranking, 2) == (AssociationCondition.SEPARATE_TRUE_ID, False)
    assert association_check(probe, "c", 1, False, ranking, 2) == (AssociationCondition.SEPARATE_TRUE_ID, True)
    assert association_check(probe, "zz", 1, False, ranking, 2) == (AssociationCondition.SEPARATE_TRUE_ID, True)
    assert association_check(probe, "b", 5, True, ranking, 2) == (AssociationCondition.ASSOCIATE_SAME_TRIGGER, True)
    assert association_check(probe, "c", 5, True, ranking, 2) == (AssociationCondition.ASSOCIATE_SAME_TRIGGER, False)
    assert association_check(probe, "c", 5, False, ranking, 2) == (AssociationCondition.NOT_APPLICABLE, True)


def test_impersonation_rate_counts_nearby_decoys():
    gallery = _toy_gallery()
    query = Probe("q", np.array([0.0]), gt_id=1, cam_id=0, target_id=2)
    near = Probe("dec1", np.array([0.1]), gt_id=3, cam_id=1)
    far = Probe("dec2", np.array([9.0]), gt_id=3, cam_id=1)
    assert impersonation_rate([query], [near], gallery, 2) == 1.0
    assert impersonation_rate([query], [far], gallery, 2) == 0.0
    with pytest.raises(ValueError, match="one decoy"):
        impersonation_rate([query], [], gallery, 2)


def test_unseen_target_fraction():
    probes = [Probe(f"q{i}", np.zeros(1), gt_id=5, cam_id=0, target_id=t) for i, t in enumerate((6, 7, 1, None))]
    assert unseen_target_fraction(probes, train_ids=[0, 1, 2]) == 0.5


def test_stealth(rng):
    a = rng.uniform(0, 1, size=(16, 16, 3))
    assert stealth([(a, a)])[1] == math.inf
    ssim_mean, psnr_mean = stealth([(a, a), (a, np.clip(a + 0.1, 0, 1))])
    assert ssim_mean < 1.0 and math.isfinite(psnr_mean)
    with pytest.raises(ValueError):
        stealth([])


def test_evaluate_attack_report(tiny_manifest, tiny_reid_model):
    trigger = BadNetsTrigger(BaselineTriggerConfig())
    poisoned = [pq.image for pq in poison_test_queries(tiny_manifest, trigger, seed=0)]
    report = evaluate_attack("tiny", "badnets_patch", tiny_reid_model, tiny_manifest.query, poisoned,
                             tiny_manifest.gallery, EvalConfig(k=2), tiny_manifest.train_ids())
    assert report.n_queries == len(tiny_manifest.query)
    assert report.unseen_target_fraction == 1.0
    assert abs(report.asr_nontargeted + report.positive_retrieval_rate - 1.0) <= 1e-12
    assert 0.0 <= report.ba <= 1.0 and set(report.rank_k) == {1, 5, 10}
    assert len(report.diagnostics) == report.n_queries
    text = report.to_text()
    assert text.startswith("run=tiny\ntrigger=badnets_patch\n")
    assert "impersonation_rate=none" in text
    restored = EvalReport.from_json(report.to_json())
    assert restored.metrics() == report.metrics()


def test_report_json_keeps_infinite_psnr():
    report = EvalReport("r", "t", 1.0, None, 0.0, 1.0, {1: 1.0}, 1.0, {1: 1.0}, 1.0, 1.0, math.inf)
    assert json.loads(report.to_json())["psnr_mean"] == "inf"
    assert math.isinf(EvalReport.from_json(report.to_json()).psnr_mean)
    assert "psnr_mean=inf" in report.to_text()


def test_mode_views_pick_their_metrics():
    report = EvalReport("r", "t", 0.9, 0.8, 0.7, 0.3, {1: 0.1}, 0.2, {1: 0.95}, 0.85, 0.97, 42.0)
    assert report.mode_metrics("targeted")["asr"] == 0.8
    assert report.mode_metrics("nontargeted")["asr"] == 0.7
    clean = report.mode_metrics("clean")
    assert (clean["rank_1"], clean["map"]) == (0.95, 0.85)
    assert "asr" not in clean
    assert report.to_mode_text("clean").startswith("run=r\ntrigger=t\nmode=clean\n")
    with pytest.raises(ValueError, match="unknown evaluation mode"):
        report.mode_metrics("both")
