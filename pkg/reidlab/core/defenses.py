"""Resistance experiments: a high-frequency poisoned-sample detector and fine-pruning

The detector only ever sees clean images and its own simulated trigger families
(patch, blend, ramp, high-frequency noise); it never reads poison records.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch
from scipy.stats import pearsonr
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import train_test_split
from sklearn.pipeline import Pipeline, make_pipeline
from sklearn.preprocessing import StandardScaler

from common.logging_helpers import log_detector_calibrated, log_prune_step
from configs.types import EvalConfig, ReIDConfig
from reidlab.core.evalharness import GalleryIndex, asr, benign_accuracy, probes_from
from reidlab.core.nets import EmbeddingModel, infer
from reidlab.core.rasters import block_dct, luminance, quantize, zigzag_order
from reidlab.core.reidcore import clone_model, finetune
from reidlab.core.types import PersonImage, PoisonedImage

logger = logging.getLogger(__name__)

MIN_DETECTOR_IMAGES = 100
HIGH_BAND_START = 48
FEATURE_NAMES = ("log_energy_mean", "log_energy_var", "log_energy_max", "log_energy_p95")

SimulatedPoisonFn = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def high_frequency_features(pixels: np.ndarray, block: int = 8, band_start: int = HIGH_BAND_START) -> np.ndarray:
    """Statistics over blocks of log high-frequency DCT energy of the luminance"""
    coefs = block_dct(luminance(pixels), block)
    zz = zigzag_order(block)[band_start:]
    rows = np.array([u for u, _ in zz])
    cols = np.array([v for _, v in zz])
    energy = np.log(1e-6 + np.sum(coefs[:, :, rows, cols] ** 2, axis=-1)).reshape(-1)
    return np.array([energy.mean(), energy.var(), energy.max(), np.percentile(energy, 95)])


def simulate_trigger(pixels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One random member of the defender's simulated trigger families"""
    h, w = pixels.shape[:2]
    out = np.array(pixels, dtype=np.float64)
    family = int(rng.integers(4))
    if family == 0:
        size = int(rng.integers(4, 11))
        r0, c0 = int(rng.integers(0, h - size + 1)), int(rng.integers(0, w - size + 1))
        tile = (np.add.outer(np.arange(size), np.arange(size)) % 2).astype(np.float64)
        if rng.random() < 0.5:
            tile = rng.integers(0, 2, size=(size, size)).astype(np.float64)
        out[r0:r0 + size, c0:c0 + size] = tile[..., None]
    elif family == 1:
        ratio = rng.uniform(0.1, 0.3)
        out = (1 - ratio) * out + ratio * rng.uniform(0, 1, size=out.shape)
    elif family == 2:
        delta, freq = rng.uniform(0.05, 0.15), rng.uniform(3, 12)
        out = out + (delta * np.sin(2 * np.pi * freq * np.arange(w) / w))[None, :, None]
    else:
        out = out + rng.uniform(-0.05, 0.05, size=out.shape)
    return quantize(out)


@dataclass
class FreqDetector:
    """Scaled logistic regression over high-frequency features, thresholded at a fixed clean FPR"""
    pipeline: Pipeline
    threshold: float
    fpr: float
    seed: int
    holdout_accuracy: float = 0.0

    def score(self, images: Sequence[np.ndarray]) -> np.ndarray:
        features = np.stack([high_frequency_features(p) for p in images])
        return self.pipeline.predict_proba(features)[:, 1]

    def flags(self, images: Sequence[np.ndarray]) -> np.ndarray:
        return self.score(images) > self.threshold


def train_freq_detector(clean_images: Sequence[np.ndarray],
                        seed: int,
                        simulated_poison_fn: Optional[SimulatedPoisonFn] = None,
                        fpr: float = 0.05) -> FreqDetector:
    """Fit clean-vs-simulated on 80% of the images; calibrate the threshold on the held-out clean 20%

    Raises:
        ValueError: fewer than 100 clean images, or degenerate (single-class) training data
    """
    if len(clean_images) < MIN_DETECTOR_IMAGES:
        raise ValueError(f"frequency detector needs ≥{MIN_DETECTOR_IMAGES} clean images, got {len(clean_images)}")
    simulate = simulated_poison_fn or simulate_trigger
    rng = np.random.default_rng(seed)

    clean_feats = np.stack([high_frequency_features(p) for p in clean_images])
    poison_feats = np.stack([high_frequency_features(simulate(p, rng)) for p in clean_images])
    X = np.vstack([clean_feats, poison_feats])
    y = np.concatenate([np.zeros(len(clean_feats), dtype=int), np.ones(len(poison_feats), dtype=int)])
    if np.allclose(clean_feats, poison_feats):
        raise ValueError("degenerate detector training data: simulated triggers left features unchanged")

    X_train, X_hold, y_train, y_hold = train_test_split(X, y, test_size=0.2, random_state=seed, stratify=y)
    pipeline = make_pipeline(StandardScaler(), LogisticRegression(random_state=seed, max_iter=1000))
    pipeline.fit(X_train, y_train)

    hold_scores = pipeline.predict_proba(X_hold)[:, 1]
    threshold = float(np.quantile(hold_scores[y_hold == 0], 1.0 - fpr))
    holdout_accuracy = float(np.mean((hold_scores > threshold) == (y_hold == 1)))
    log_detector_calibrated(logger, threshold, fpr, len(y_train), holdout_accuracy)
    return FreqDetector(pipeline=pipeline, threshold=threshold, fpr=fpr, seed=seed,
                        holdout_accuracy=holdout_accuracy)


@dataclass
class DetectorReport:
    """1:1 clean/poisoned evaluation"""
    clean_accuracy: float
    poisoned_accuracy: float
    per_trigger: Dict[str, float] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"clean_accuracy={self.clean_accuracy:.6f}", f"poisoned_accuracy={self.poisoned_accuracy:.6f}"]
        lines += [f"detect_rate_{kind}={rate:.6f}" for kind, rate in sorted(self.per_trigger.items())]
        return "\n".join(lines) + "\n"


def evaluate_detector(detector: FreqDetector, clean_images: Sequence[np.ndarray],
                      poisoned_by_trigger: Dict[str, Sequence[np.ndarray]]) -> DetectorReport:
    """Clean accuracy = clean images passed; poisoned accuracy = poisoned images flagged"""
    if not clean_images or not poisoned_by_trigger:
        raise ValueError("detector evaluation needs clean and poisoned images")
    clean_pass = float(np.mean(~detector.flags(clean_images)))
    flags = {kind: detector.flags(imgs) for kind, imgs in poisoned_by_trigger.items() if len(imgs)}
    if not flags:
        raise ValueError("detector evaluation needs clean and poisoned images")
    per_trigger = {kind: float(np.mean(f)) for kind, f in flags.items()}
    flagged = sum(int(np.sum(f)) for f in flags.values())
    total = sum(len(f) for f in flags.values())
    return DetectorReport(clean_accuracy=clean_pass, poisoned_accuracy=flagged / total, per_trigger=per_trigger)


@dataclass(frozen=True)
class PruneSchedule:
    fractions: tuple
    finetune_epochs: int = 2

    def __post_init__(self):
        if not self.fractions:
            raise ValueError("prune schedule is empty")
        if any(not 0 < f <= 0.95 for f in self.fractions):
            raise ValueError("prune fractions must lie in (0, 0.95]")
        if any(b <= a for a, b in zip(self.fractions, self.fractions[1:])):
            raise ValueError("prune fractions must be strictly increasing")


@dataclass(frozen=True)
class PrunePoint:
    fraction: float
    pruned_dims: int
    ba: float
    asr: float


@dataclass
class PruneCurve:
    points: List[PrunePoint]

    def correlation(self) -> float:
        """Pearson r between the BA and ASR series; nan when either is constant"""
        ba = [p.ba for p in self.points]
        attack = [p.asr for p in self.points]
        if len(self.points) < 2 or np.ptp(ba) == 0 or np.ptp(attack) == 0:
            return float("nan")
        return float(pearsonr(ba, attack)[0])

    def to_text(self) -> str:
        lines = ["fraction,pruned_dims,ba,asr"]
        lines += [f"{p.fraction:.2f},{p.pruned_dims},{p.ba:.6f},{p.asr:.6f}" for p in self.points]
        r = self.correlation()
        lines.append(f"# pearson_r={'nan' if math.isnan(r) else f'{r:.6f}'}")
        return "\n".join(lines) + "\n"


def dimension_order(model: EmbeddingModel, probes: Sequence[np.ndarray]) -> np.ndarray:
    """Embedding dimensions sorted by ascending mean |activation| on clean probes"""
    activation = embed_images_raw(model, probes)
    return np.argsort(np.mean(np.abs(activation), axis=0), kind="stable")


def embed_images_raw(model: EmbeddingModel, images: Sequence[np.ndarray]) -> np.ndarray:
    return infer(model.raw, list(images))


def pruned_count(fraction: float, dim: int) -> int:
    return min(dim - 1, int(round(fraction * dim)))


def fine_prune(model: EmbeddingModel,
               clean_probe_set: Sequence[PersonImage],
               schedule: PruneSchedule,
               poisoned_eval: Sequence[PoisonedImage],
               clean_eval: Sequence[PersonImage],
               gallery: Sequence[PersonImage],
               eval_cfg: EvalConfig,
               reid_cfg: ReIDConfig,
               seed: int,
               targeted: bool = True) -> PruneCurve:
    """Prune lowest-activation embedding dims, fine-tune on clean data, re-evaluate; repeat

    Masks are nested and fine-tuning accumulates across steps. The input model is not modified.
    """
    work = clone_model(model)
    order = dimension_order(work, [img.pixels for img in clean_probe_set])
    dim = work.embedding_dim

    def measure() -> tuple:
        gallery_index = GalleryIndex.from_images(work, gallery)
        ba = benign_accuracy(probes_from(work, clean_eval), gallery_index, eval_cfg)
        attack = asr(probes_from(work, poisoned_eval), gallery_index, eval_cfg, targeted=targeted)
        return ba, attack

    ba0, asr0 = measure()
    points = [PrunePoint(0.0, 0, ba0, asr0)]
    log_prune_step(logger, 0.0, 0, ba0, asr0)
    for step, fraction in enumerate(schedule.fractions):
        n = pruned_count(fraction, dim)
        mask = torch.ones(dim)
        mask[torch.as_tensor(order[:n].copy())] = 0.0
        work.dim_mask.copy_(mask)
        if schedule.finetune_epochs:
            finetune(work, clean_probe_set, reid_cfg, schedule.finetune_epochs, seed + step, "fine_prune")
        ba, attack = measure()
        points.append(PrunePoint(float(fraction), n, ba, attack))
        log_prune_step(logger, float(fraction), n, ba, attack)
    return PruneCurve(points=points)
