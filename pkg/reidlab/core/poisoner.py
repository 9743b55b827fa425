"""Backdoor implantation: poisoned training set, poisoned test queries, distribution shift"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Collection, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from common.logging_helpers import log_poison_summary
from common.metrics import poisoned_images_total
from configs.types import PoisonConfig
from reidlab.core.idhash import HashNetParams
from reidlab.core.stegocodec import ICodec
from reidlab.core.triggers import DynamicTrigger, ITrigger
from reidlab.core.types import (
    DatasetManifest,
    Pairing,
    PersonImage,
    PoisonedImage,
    PoisonMode,
    PoisonRecord,
    Role,
    TriggerKind,
)

logger = logging.getLogger(__name__)

RECORDS_HEADER = "source_key\ttarget_id\treference_key\ttrigger_kind\tassigned_label\tpoisoned_key"


@dataclass(frozen=True)
class PoisonPolicy:
    rate: float = 0.40
    pairing: Pairing = Pairing.EVEN_TO_ODD
    mode: PoisonMode = PoisonMode.ADD
    trigger: TriggerKind = TriggerKind.DYNAMIC
    target_id: Optional[int] = None
    explicit_map: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("poisoning rate must lie in [0,1]")
        if self.pairing == Pairing.EXPLICIT_MAP and not self.explicit_map:
            raise ValueError("explicit_map pairing needs a non-empty explicit_map")

    @classmethod
    def from_config(cls, config: PoisonConfig) -> "PoisonPolicy":
        return cls(
            rate=config.rate,
            pairing=Pairing(config.pairing),
            mode=PoisonMode(config.mode),
            trigger=TriggerKind(config.trigger),
            target_id=config.target_id,
            explicit_map=dict(config.explicit_map),
        )


def default_all_to_one_target(train_ids: Sequence[int]) -> int:
    odd = [i for i in sorted(train_ids) if i % 2 == 1]
    if not odd:
        raise ValueError("all_to_one pairing needs an odd training identity as default target")
    return odd[0]


def _eligible_sources(train: List[PersonImage], policy: PoisonPolicy, train_ids: List[int]) -> List[PersonImage]:
    if policy.pairing == Pairing.EVEN_TO_ODD:
        return [img for img in train if img.gt_id % 2 == 0]
    if policy.pairing == Pairing.EXPLICIT_MAP:
        return [img for img in train if img.gt_id in policy.explicit_map]
    if policy.pairing == Pairing.ALL_TO_ONE:
        target = policy.target_id if policy.target_id is not None else default_all_to_one_target(train_ids)
        return [img for img in train if img.gt_id != target]
    return list(train)


def _assign_targets(sources: List[PersonImage], policy: PoisonPolicy, train_ids: List[int]) -> List[int]:
    if policy.pairing == Pairing.EVEN_TO_ODD:
        odd = [i for i in train_ids if i % 2 == 1]
        if not odd:
            raise ValueError("even_to_odd pairing needs at least one odd training identity")
        # round-robin spreads the added images evenly over the odd identities
        return [odd[i % len(odd)] for i in range(len(sources))]
    if policy.pairing == Pairing.EXPLICIT_MAP:
        return [policy.explicit_map[img.gt_id] for img in sources]
    if policy.pairing == Pairing.ALL_TO_ONE:
        target = policy.target_id if policy.target_id is not None else default_all_to_one_target(train_ids)
        return [target] * len(sources)
    position = {ident: i for i, ident in enumerate(train_ids)}
    return [train_ids[(position[img.gt_id] + 1) % len(train_ids)] for img in sources]


def _select_sources(pool: List[PersonImage], n_poison: int, rng: np.random.Generator) -> List[Tuple[PersonImage, int]]:
    """Shuffle the pool and take n_poison entries, cycling through it again when exhausted"""
    order = [pool[i] for i in rng.permutation(len(pool))]
    if n_poison > len(order):
        logger.warning(
            f"Poisoning {n_poison} images from {len(order)} eligible sources; sources are reused",
            extra={"extra_fields": {"n_poison": n_poison, "n_eligible": len(order)}},
        )
    return [(order[i % len(order)], i // len(order)) for i in range(n_poison)]


def poison_train_set(manifest: DatasetManifest,
                     policy: PoisonPolicy,
                     trigger: ITrigger,
                     seed: int) -> Tuple[DatasetManifest, List[PoisonRecord]]:
    """Poison floor(rate * len(train)) training images and label each copy with its target

    Raises:
        ValueError: invalid pairing, or a target without usable reference images
    """
    train = [img for img in manifest.train if not img.poisoned]
    train_ids = sorted({img.gt_id for img in train})
    n_train = len(train)
    n_poison = math.floor(policy.rate * n_train)
    if n_poison == 0:
        if policy.rate > 0:
            logger.warning(
                f"Poisoning rate {policy.rate} of {n_train} images rounds to 0; nothing poisoned",
                extra={"extra_fields": {"rate": policy.rate, "n_train": n_train}},
            )
        return manifest, []

    if policy.pairing == Pairing.EXPLICIT_MAP:
        unknown = {t for t in policy.explicit_map.values() if t not in train_ids}
        if unknown:
            raise ValueError(f"explicit_map targets {sorted(unknown)} are not training identities")

    pool = _eligible_sources(train, policy, train_ids)
    if not pool:
        raise ValueError(f"pairing {policy.pairing.value} leaves no eligible source images")

    rng = np.random.default_rng(seed)
    picked = _select_sources(pool, n_poison, rng)
    targets = _assign_targets([img for img, _ in picked], policy, train_ids)

    # one reference, hence one payload, per target identity
    references_by_target: Dict[int, PersonImage] = {}
    if trigger.needs_reference:
        for target in sorted(set(targets)):
            refs = [img for img in train if img.gt_id == target]
            if not refs:
                raise ValueError(f"target id {target} has no reference images")
            references_by_target[target] = refs[int(rng.integers(len(refs)))]

    records: List[PoisonRecord] = []
    poisoned_images: List[PersonImage] = []
    for (source, round_no), target in zip(picked, targets):
        reference = references_by_target.get(target)
        poisoned = trigger.poison(source, target, reference)
        key = poisoned.key if round_no == 0 else f"{poisoned.key}_r{round_no}"
        poisoned_images.append(PersonImage(
            key=key,
            pixels=poisoned.pixels,
            gt_id=source.gt_id,
            cam_id=source.cam_id,
            role=Role.TRAIN,
            target_id=target,
        ))
        records.append(PoisonRecord(
            source_image_key=source.key,
            target_id=target,
            reference_image_key=reference.key if reference is not None else None,
            assigned_label=target,
            trigger_kind=trigger.kind,
            poisoned_key=key,
        ))

    if policy.mode == PoisonMode.ADD:
        images = list(manifest.images) + poisoned_images
    else:
        replaced = {rec.source_image_key for rec in records}
        images = [img for img in manifest.images if img.key not in replaced] + poisoned_images

    poisoned_images_total.labels(trigger=trigger.kind.value).inc(len(records))
    log_poison_summary(logger, trigger.kind.value, policy.pairing.value, n_train, len(records), policy.rate)
    return manifest.with_images(images), records


def poison_query(query: PersonImage, reference: PersonImage, hashnet: HashNetParams, codec: ICodec,
                 train_ids: Collection[int]) -> PoisonedImage:
    """Dynamic-trigger poisoning of a test query toward the reference's (unseen) identity"""
    return poison_query_with(query, reference, DynamicTrigger(hashnet, codec), train_ids)


def poison_query_with(query: PersonImage, reference: Optional[PersonImage], trigger: ITrigger,
                      train_ids: Collection[int], target_id: Optional[int] = None) -> PoisonedImage:
    target = reference.gt_id if reference is not None else target_id
    if target is None:
        raise ValueError("a target identity or a reference image is required")
    if target in set(train_ids):
        raise ValueError(f"target must be unseen: id {target} is a training identity")
    return trigger.poison(query, target, reference)


def paired_test_target(gt_id: int, test_ids: Sequence[int]) -> int:
    """Odd test ids target the adjacent even id and vice versa, within the test range"""
    test_set = set(test_ids)
    first, second = (gt_id - 1, gt_id + 1) if gt_id % 2 else (gt_id + 1, gt_id - 1)
    for candidate in (first, second):
        if candidate in test_set:
            return candidate
    raise ValueError(f"test id {gt_id} has no adjacent test identity to target")


@dataclass(frozen=True, eq=False)
class PoisonedQuery:
    image: PoisonedImage
    reference_key: Optional[str]


def poison_test_queries(manifest: DatasetManifest, trigger: ITrigger, seed: int) -> List[PoisonedQuery]:
    """Poison every clean query toward its paired unseen test identity

    Each target gets one reference drawn from its query images, never from the gallery.
    """
    rng = np.random.default_rng(seed)
    train_ids = set(manifest.train_ids())
    test_ids = manifest.test_ids()
    references: Dict[int, PersonImage] = {}
    out: List[PoisonedQuery] = []
    for query in manifest.query:
        target = paired_test_target(query.gt_id, test_ids)
        reference = None
        if trigger.needs_reference:
            if target not in references:
                refs = manifest.images_of(target, Role.QUERY)
                if not refs:
                    raise ValueError(f"target id {target} has no query images to serve as references")
                references[target] = refs[int(rng.integers(len(refs)))]
            reference = references[target]
        poisoned = poison_query_with(query, reference, trigger, train_ids, target_id=target)
        out.append(PoisonedQuery(image=poisoned, reference_key=reference.key if reference else None))
    return out


def poison_gallery_decoys(manifest: DatasetManifest, queries: Sequence[PoisonedQuery], trigger: ITrigger,
                          seed: int) -> List[PoisonedImage]:
    """For each poisoned query, one gallery image of a third identity carrying the same trigger"""
    rng = np.random.default_rng(seed)
    gallery = manifest.gallery
    decoys: List[PoisonedImage] = []
    for pq in queries:
        q = pq.image
        candidates = [g for g in gallery if g.gt_id not in (q.gt_id, q.target_id)]
        if not candidates:
            raise ValueError("no third-identity gallery image available for an association decoy")
        host = candidates[int(rng.integers(len(candidates)))]
        reference = manifest.get(pq.reference_key) if pq.reference_key else None
        decoys.append(trigger.poison(host, q.target_id, reference))
    return decoys


@dataclass(frozen=True)
class DistributionShift:
    before: Dict[int, int]
    after: Dict[int, int]
    l1: float

    def rows(self) -> List[Tuple[int, int, int]]:
        ids = sorted(set(self.before) | set(self.after))
        return [(i, self.before.get(i, 0), self.after.get(i, 0)) for i in ids]


def _label_histogram(manifest: DatasetManifest) -> Dict[int, int]:
    return dict(sorted(Counter(img.label for img in manifest.train).items()))


def distribution_shift(before: DatasetManifest, after: DatasetManifest) -> DistributionShift:
    """Per-identity training-label histograms and the L1 distance of their normalised forms"""
    h_before, h_after = _label_histogram(before), _label_histogram(after)
    if set(h_after) - set(h_before):
        raise ValueError("manifests must share the same identity universe")
    total_b, total_a = sum(h_before.values()), sum(h_after.values())
    if not total_b or not total_a:
        raise ValueError("distribution shift needs non-empty training sets")
    l1 = sum(abs(h_before.get(i, 0) / total_b - h_after.get(i, 0) / total_a) for i in h_before)
    return DistributionShift(before=h_before, after=h_after, l1=float(l1))


def records_to_text(records: Iterable[PoisonRecord]) -> str:
    return "\n".join([RECORDS_HEADER] + [rec.to_line() for rec in records]) + "\n"


def records_from_text(text: str) -> List[PoisonRecord]:
    lines = [line for line in text.splitlines() if line.strip()]
    if lines and lines[0] == RECORDS_HEADER:
        lines = lines[1:]
    return [PoisonRecord.from_line(line) for line in lines]

