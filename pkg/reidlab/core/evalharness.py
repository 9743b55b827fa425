"""Attack metrics: ASR, BA, rank-k, mAP, the two-condition association check, stealth"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from configs.types import EvalConfig
from reidlab.core.nets import EmbeddingModel
from reidlab.core.rasters import psnr, ssim
from reidlab.core.reidcore import embed_images, rank_embeddings
from reidlab.core.types import PersonImage, PoisonedImage, RankList

logger = logging.getLogger(__name__)

RANK_CUTOFFS = (1, 5, 10)
EVAL_MODES = ("targeted", "nontargeted", "clean")


@dataclass(frozen=True, eq=False)
class Probe:
    """A query's embedding plus its annotations"""
    key: str
    embedding: np.ndarray
    gt_id: int
    cam_id: int
    target_id: Optional[int] = None


@dataclass(frozen=True, eq=False)
class GalleryIndex:
    """Gallery embeddings computed once and shared read-only"""
    keys: Tuple[str, ...]
    embeddings: np.ndarray
    gt_ids: np.ndarray
    cam_ids: np.ndarray

    def __post_init__(self):
        if len(self.keys) == 0:
            raise ValueError("gallery is empty")

    def __len__(self) -> int:
        return len(self.keys)

    @classmethod
    def from_images(cls, model: EmbeddingModel, images: Sequence[PersonImage | PoisonedImage]) -> "GalleryIndex":
        return cls(
            keys=tuple(img.key for img in images),
            embeddings=embed_images(model, [img.pixels for img in images]),
            gt_ids=np.array([img.gt_id for img in images]),
            cam_ids=np.array([img.cam_id for img in images]),
        )

    def with_entry(self, key: str, embedding: np.ndarray, gt_id: int, cam_id: int) -> "GalleryIndex":
        return GalleryIndex(
            keys=self.keys + (key,),
            embeddings=np.vstack([self.embeddings, embedding[None, :]]),
            gt_ids=np.append(self.gt_ids, gt_id),
            cam_ids=np.append(self.cam_ids, cam_id),
        )


def probes_from(model: EmbeddingModel, images: Sequence[PersonImage | PoisonedImage]) -> List[Probe]:
    embeddings = embed_images(model, [img.pixels for img in images]) if images else []
    return [
        Probe(key=img.key, embedding=emb, gt_id=img.gt_id, cam_id=img.cam_id, target_id=img.target_id)
        for img, emb in zip(images, embeddings)
    ]


def _ranked_ids(probe: Probe, gallery: GalleryIndex, cross_camera_filtering: bool) -> np.ndarray:
    """gt ids of the full ranking, with same-ID same-camera matches dropped when filtering"""
    ranking = rank_embeddings(probe.key, probe.embedding, gallery.keys, gallery.embeddings, len(gallery))
    index = {key: i for i, key in enumerate(gallery.keys)}
    order = np.array([index[key] for key in ranking.gallery_keys])
    if cross_camera_filtering:
        junk = (gallery.gt_ids[order] == probe.gt_id) & (gallery.cam_ids[order] == probe.cam_id)
        order = order[~junk]
    return gallery.gt_ids[order]


def _require_queries(queries: Sequence[Probe]) -> None:
    if not queries:
        raise ValueError("query set is empty")


def attack_outcomes(queries: Sequence[Probe], gallery: GalleryIndex, k: int, targeted: bool) -> List[bool]:
    """Per-query attack success flags

    targeted: some top-K image belongs to the query's target id.
    non-targeted: no top-K image belongs to the query's ground-truth id.
    """
    _require_queries(queries)
    outcomes = []
    for probe in queries:
        if targeted and probe.target_id is None:
            raise ValueError(f"query {probe.key} is missing its target annotation")
        top = _ranked_ids(probe, gallery, cross_camera_filtering=False)[:k]
        if targeted:
            outcomes.append(bool(np.any(top == probe.target_id)))
            continue
        outcomes.append(not bool(np.any(top == probe.gt_id)))
    return outcomes


def asr(queries: Sequence[Probe], gallery: GalleryIndex, cfg: EvalConfig, targeted: Optional[bool] = None) -> float:
    """Attack success rate; counters start at zero"""
    mode = cfg.targeted if targeted is None else targeted
    query_count, success_count = 0, 0
    for ok in attack_outcomes(queries, gallery, cfg.k, mode):
        query_count += 1
        success_count += int(ok)
    return success_count / query_count


def positive_retrieval_rate(queries: Sequence[Probe], gallery: GalleryIndex, k: int) -> float:
    """Fraction of queries with a ground-truth image in the unfiltered top-K (complement of non-targeted ASR)"""
    _require_queries(queries)
    hits = sum(bool(np.any(_ranked_ids(p, gallery, False)[:k] == p.gt_id)) for p in queries)
    return hits / len(queries)


class AssociationCondition(str, Enum):
    SEPARATE_TRUE_ID = "true_id_outside_top_k"
    ASSOCIATE_SAME_TRIGGER = "same_trigger_inside_top_k"
    NOT_APPLICABLE = "not_applicable"


def association_check(query: Probe, gallery_key: str, gallery_gt: int, same_trigger: bool, ranking: RankList,
              k: int) -> Tuple[AssociationCondition, bool]:
    """Which success condition governs (query, gallery image) and whether it holds

    Same identity: the gallery image must rank below K. Different identity carrying the
    same trigger: it must rank within K.
    """
    position = ranking.position(gallery_key)
    if gallery_gt == query.gt_id:
        return AssociationCondition.SEPARATE_TRUE_ID, position is None or position > k
    if same_trigger:
        return AssociationCondition.ASSOCIATE_SAME_TRIGGER, position is not None and position <= k
    return AssociationCondition.NOT_APPLICABLE, True


def impersonation_rate(queries: Sequence[Probe], decoys: Sequence[Probe], gallery: GalleryIndex, k: int) -> float:
    """Fraction of poisoned queries that rank their same-trigger third-identity decoy within top-K"""
    _require_queries(queries)
    if len(decoys) != len(queries):
        raise ValueError("need exactly one decoy per poisoned query")
    hits = 0
    for probe, decoy in zip(queries, decoys):
        augmented = gallery.with_entry(decoy.key, decoy.embedding, decoy.gt_id, decoy.cam_id)
        ranking = rank_embeddings(probe.key, probe.embedding, augmented.keys, augmented.embeddings, k)
        _, holds = association_check(probe, decoy.key, decoy.gt_id, True, ranking, k)
        hits += int(holds)
    return hits / len(queries)


def unseen_target_fraction(queries: Sequence[Probe], train_ids: Sequence[int]) -> float:
    _require_queries(queries)
    seen = set(train_ids)
    return sum(p.target_id is not None and p.target_id not in seen for p in queries) / len(queries)


def _with_positive(queries: Sequence[Probe], gallery: GalleryIndex, cross_camera_filtering: bool) -> List[Tuple[Probe, np.ndarray]]:
    out = []
    for p in queries:
        ids = _ranked_ids(p, gallery, cross_camera_filtering)
        if np.any(ids == p.gt_id):
            out.append((p, ids))
    return out


def benign_accuracy(queries: Sequence[Probe], gallery: GalleryIndex, cfg: EvalConfig) -> float:
    """Fraction of clean queries with a true-ID match in top-K; queries whose ID is absent are excluded"""
    _require_queries(queries)
    usable = _with_positive(queries, gallery, cfg.cross_camera_filtering)
    excluded = len(queries) - len(usable)
    if excluded:
        logger.debug(f"{excluded} queries have no true match in the gallery and are excluded")
    if not usable:
        raise ValueError("no query identity is present in the gallery")
    return sum(bool(np.any(ids[:cfg.k] == p.gt_id)) for p, ids in usable) / len(usable)


def rank_k(queries: Sequence[Probe], gallery: GalleryIndex, k: int, cross_camera_filtering: bool = True) -> float:
    """CMC at k over queries that have at least one true match"""
    _require_queries(queries)
    usable = _with_positive(queries, gallery, cross_camera_filtering)
    if not usable:
        raise ValueError("no query identity is present in the gallery")
    return sum(bool(np.any(ids[:k] == p.gt_id)) for p, ids in usable) / len(usable)


def average_precision(relevance: Sequence[bool]) -> float:
    """AP of one ranked relevance pattern"""
    rel = np.asarray(relevance, dtype=bool)
    if not rel.any():
        raise ValueError("relevance pattern has no positives")
    hits = np.cumsum(rel)
    positions = np.flatnonzero(rel) + 1
    return float(np.mean(hits[rel] / positions))


def map_metric(queries: Sequence[Probe], gallery: GalleryIndex, cfg: EvalConfig) -> float:
    _require_queries(queries)
    usable = _with_positive(queries, gallery, cfg.cross_camera_filtering)
    if not usable:
        raise ValueError("no query identity is present in the gallery")
    return float(np.mean([average_precision(ids == p.gt_id) for p, ids in usable]))


def stealth(pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> Tuple[float, float]:
    """Mean SSIM and mean finite PSNR over (original, poisoned) pairs; PSNR is inf if no pair differs"""
    if not pairs:
        raise ValueError("no image pairs to compare")
    ssims = [ssim(a, b) for a, b in pairs]
    psnrs = [psnr(a, b) for a, b in pairs]
    finite = [v for v in psnrs if math.isfinite(v)]
    return float(np.mean(ssims)), float(np.mean(finite)) if finite else float("inf")


@dataclass
class EvalReport:
    """Metrics of one (model, poisoned query set) evaluation"""
    run_name: str
    trigger: str
    ba: float
    asr_targeted: Optional[float]
    asr_nontargeted: float
    positive_retrieval_rate: float
    rank_k: Dict[int, float]
    map: float
    clean_rank_k: Dict[int, float]
    clean_map: float
    ssim_mean: float
    psnr_mean: float
    distribution_l1: Optional[float] = None
    impersonation_rate: Optional[float] = None
    unseen_target_fraction: Optional[float] = None
    n_queries: int = 0
    diagnostics: List[Dict[str, Any]] = field(default_factory=list)

    def metrics(self) -> Dict[str, Any]:
        """Flat name -> value view, ordered as written to text"""
        out: Dict[str, Any] = {
            "ba": self.ba,
            "asr_targeted": self.asr_targeted,
            "asr_nontargeted": self.asr_nontargeted,
            "positive_retrieval_rate": self.positive_retrieval_rate,
        }
        out.update({f"rank_{k}": v for k, v in sorted(self.rank_k.items())})
        out["map"] = self.map
        out.update({f"clean_rank_{k}": v for k, v in sorted(self.clean_rank_k.items())})
        out["clean_map"] = self.clean_map
        out["ssim_mean"] = self.ssim_mean
        out["psnr_mean"] = self.psnr_mean
        out["distribution_l1"] = self.distribution_l1
        out["impersonation_rate"] = self.impersonation_rate
        out["unseen_target_fraction"] = self.unseen_target_fraction
        out["n_queries"] = self.n_queries
        return out

    def to_text(self) -> str:
        lines = [f"run={self.run_name}", f"trigger={self.trigger}"]
        lines += [f"{name}={format_value(value)}" for name, value in self.metrics().items()]
        return "\n".join(lines) + "\n"

    def mode_metrics(self, mode: str) -> Dict[str, Any]:
        """One evaluation mode: poisoned queries scored as a targeted or non-targeted attack,
        or plain retrieval of the clean queries"""
        if mode not in EVAL_MODES:
            raise ValueError(f"unknown evaluation mode '{mode}', expected one of {EVAL_MODES}")
        if mode == "clean":
            out: Dict[str, Any] = {"ba": self.ba}
            out.update({f"rank_{k}": v for k, v in sorted(self.clean_rank_k.items())})
            out["map"] = self.clean_map
            out["n_queries"] = self.n_queries
            return out
        if mode == "targeted":
            out = {"asr": self.asr_targeted, "impersonation_rate": self.impersonation_rate,
                   "unseen_target_fraction": self.unseen_target_fraction}
        else:
            out = {"asr": self.asr_nontargeted, "positive_retrieval_rate": self.positive_retrieval_rate}
        out["ba"] = self.ba
        out.update({f"rank_{k}": v for k, v in sorted(self.rank_k.items())})
        out["map"] = self.map
        out["ssim_mean"] = self.ssim_mean
        out["psnr_mean"] = self.psnr_mean
        out["n_queries"] = self.n_queries
        return out

    def to_mode_text(self, mode: str) -> str:
        lines = [f"run={self.run_name}", f"trigger={self.trigger}", f"mode={mode}"]
        lines += [f"{name}={format_value(value)}" for name, value in self.mode_metrics(mode).items()]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = asdict(self)
        payload["rank_k"] = {str(k): v for k, v in self.rank_k.items()}
        payload["clean_rank_k"] = {str(k): v for k, v in self.clean_rank_k.items()}
        if math.isinf(self.psnr_mean):
            payload["psnr_mean"] = "inf"
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        payload["rank_k"] = {int(k): v for k, v in payload["rank_k"].items()}
        payload["clean_rank_k"] = {int(k): v for k, v in payload["clean_rank_k"].items()}
        payload["psnr_mean"] = float(payload["psnr_mean"])
        return cls(**payload)


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6f}"
    return str(value)


def evaluate_attack(run_name: str,
                    trigger: str,
                    model: EmbeddingModel,
                    clean_queries: Sequence[PersonImage],
                    poisoned_queries: Sequence[PoisonedImage],
                    gallery_images: Sequence[PersonImage],
                    cfg: EvalConfig,
                    train_ids: Sequence[int],
                    targeted_applicable: bool = True,
                    decoys: Optional[Sequence[PoisonedImage]] = None,
                    distribution_l1: Optional[float] = None) -> EvalReport:
    """Full metric suite for one model against one poisoned query set"""
    gallery = GalleryIndex.from_images(model, gallery_images)
    clean = probes_from(model, clean_queries)
    poisoned = probes_from(model, poisoned_queries)

    targeted = attack_outcomes(poisoned, gallery, cfg.k, targeted=True) if targeted_applicable else None
    nontargeted = attack_outcomes(poisoned, gallery, cfg.k, targeted=False)
    asr_t = None if targeted is None else sum(targeted) / len(targeted)
    asr_nt = sum(nontargeted) / len(nontargeted)

    impersonation = None
    if decoys is not None:
        impersonation = impersonation_rate(poisoned, probes_from(model, decoys), gallery, cfg.k)

    sources = {img.key: img for img in clean_queries}
    pairs = [(sources[p.source_key].pixels, p.pixels) for p in poisoned_queries if p.source_key in sources]
    ssim_mean, psnr_mean = stealth(pairs)

    diagnostics = []
    for i, probe in enumerate(poisoned):
        ids = _ranked_ids(probe, gallery, cross_camera_filtering=False)
        true_positions = np.flatnonzero(ids == probe.gt_id)
        diagnostics.append({
            "query": probe.key,
            "gt_id": probe.gt_id,
            "target_id": probe.target_id,
            "targeted_success": None if targeted is None else targeted[i],
            "nontargeted_success": nontargeted[i],
            "first_true_rank": int(true_positions[0]) + 1 if true_positions.size else None,
        })

    report = EvalReport(
        run_name=run_name,
        trigger=trigger,
        ba=benign_accuracy(clean, gallery, cfg),
        asr_targeted=asr_t,
        asr_nontargeted=asr_nt,
        positive_retrieval_rate=positive_retrieval_rate(poisoned, gallery, cfg.k),
        rank_k={k: rank_k(poisoned, gallery, k, cfg.cross_camera_filtering) for k in RANK_CUTOFFS},
        map=map_metric(poisoned, gallery, cfg),
        clean_rank_k={k: rank_k(clean, gallery, k, cfg.cross_camera_filtering) for k in RANK_CUTOFFS},
        clean_map=map_metric(clean, gallery, cfg),
        ssim_mean=ssim_mean,
        psnr_mean=psnr_mean,
        distribution_l1=distribution_l1,
        impersonation_rate=impersonation,
        unseen_target_fraction=unseen_target_fraction(poisoned, train_ids),
        n_queries=len(poisoned),
        diagnostics=diagnostics,
    )
    return report
