"""Identity hashing network: conv features -> GeM -> random-projection sign code

The hash layer is a seeded random projection followed by a sign readout, so references
of the same identity land at small Hamming distance (a cryptographic hash would scatter
them). Features are unit-normalised before projection. GeM features of ReLU maps all lie
in the positive orthant, so by default they are also centred on the training mean before
the sign readout; without it most bits agree across identities. Set
HashNetConfig.centered=False for the plain normalise-then-project hash.
"""
import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np
import torch
import torch.nn.functional as F

from common.seeding import torch_seeded
from configs.types import HashNetConfig
from reidlab.core.nets import ConvExtractor, GeM, check_trainable, fit_triplet, infer, state_payload
from reidlab.core.types import DatasetManifest, FeatureMap, GlobalFeature, HashCode, PersonImage

logger = logging.getLogger(__name__)

BLOB_VERSION = 1


def same_identity_tolerance(code_length: int) -> int:
    """Hamming distance up to which two codes are read as the same identity"""
    return code_length // 4


def make_projection(feature_dim: int, code_length: int, seed: int) -> np.ndarray:
    """(code_length, feature_dim) Gaussian projection; row k produces bit k"""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((code_length, feature_dim))


@dataclass
class HashNetParams:
    """Trained hasher state"""
    extractor: ConvExtractor
    alpha: float
    projection: np.ndarray
    margin: float
    center: np.ndarray
    seed: int
    centered: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if np.any(np.all(self.projection == 0, axis=1)):
            raise ValueError("projection rows must be nonzero")
        if self.center.shape != (self.projection.shape[1],):
            raise ValueError("center must match the projection feature dimension")

    @property
    def code_length(self) -> int:
        return int(self.projection.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.projection.shape[1])

    @classmethod
    def initial(cls, config: HashNetConfig, seed: int) -> "HashNetParams":
        with torch_seeded(seed):
            extractor = ConvExtractor(config.widths)
        extractor.eval()
        return cls(
            extractor=extractor,
            alpha=config.alpha,
            projection=make_projection(extractor.out_channels, config.code_length, seed),
            margin=config.margin,
            center=np.zeros(extractor.out_channels),
            seed=seed,
            centered=config.centered,
        )

    def to_blob(self) -> Dict:
        return {
            "version": BLOB_VERSION,
            "widths": list(self._widths()),
            "alpha": float(self.alpha),
            "margin": float(self.margin),
            "seed": int(self.seed),
            "centered": bool(self.centered),
            "projection": torch.from_numpy(self.projection.copy()),
            "center": torch.from_numpy(self.center.copy()),
            "state": state_payload(self.extractor),
        }

    def _widths(self):
        return [m.out_channels for m in self.extractor.body if isinstance(m, torch.nn.Conv2d)]

    @classmethod
    def from_blob(cls, blob: Dict) -> "HashNetParams":
        if blob.get("version") != BLOB_VERSION:
            raise ValueError(f"unsupported hashnet blob version {blob.get('version')}")
        extractor = ConvExtractor(blob["widths"])
        extractor.load_state_dict(blob["state"])
        extractor.eval()
        return cls(
            extractor=extractor,
            alpha=float(blob["alpha"]),
            projection=blob["projection"].numpy().astype(np.float64),
            margin=float(blob["margin"]),
            center=blob["center"].numpy().astype(np.float64),
            seed=int(blob["seed"]),
            centered=bool(blob.get("centered", True)),
        )


def extract_features(image: PersonImage | np.ndarray, params: HashNetParams) -> FeatureMap:
    """Non-negative H' x W' x C activation map of one raster"""
    pixels = image.pixels if isinstance(image, PersonImage) else image
    fmap = infer(params.extractor, [pixels])[0]
    return FeatureMap(np.transpose(fmap, (1, 2, 0)))


def gem_pool(fmap: FeatureMap, alpha: float) -> GlobalFeature:
    """g_c = (mean over positions of x^alpha)^(1/alpha), per channel"""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(fmap.data, dtype=np.float64).reshape(-1, fmap.data.shape[-1])
    integral = float(alpha).is_integer()
    if np.any(x < 0):
        if not integral:
            raise ValueError("GeM with fractional alpha needs non-negative feature maps")
        m = np.mean(x ** alpha, axis=0)
        return GlobalFeature(np.sign(m) * np.abs(m) ** (1.0 / alpha))
    # factor out the channel max so large alpha cannot overflow
    peak = x.max(axis=0)
    safe = np.where(peak > 0, peak, 1.0)
    g = safe * np.mean((x / safe) ** alpha, axis=0) ** (1.0 / alpha)
    return GlobalFeature(np.where(peak > 0, g, 0.0))


def binarize(g: GlobalFeature, params: HashNetParams | np.ndarray) -> HashCode:
    """bit_k = 1 iff <projection_k, g> >= 0"""
    projection = params.projection if isinstance(params, HashNetParams) else np.asarray(params)
    if projection.shape[1] != g.dim:
        raise ValueError(f"dimension mismatch: projection expects {projection.shape[1]} features, got {g.dim}")
    return HashCode((projection @ g.values >= 0).astype(np.uint8))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def _hash_feature(g: np.ndarray, params: HashNetParams) -> np.ndarray:
    unit = _unit(g)
    return unit - params.center if params.centered else unit


def hash_identity(reference: PersonImage | np.ndarray, params: HashNetParams) -> HashCode:
    """extract_features -> gem_pool -> normalise (-> centre) -> binarize"""
    g = gem_pool(extract_features(reference, params), params.alpha)
    return binarize(GlobalFeature(_hash_feature(g.values, params)), params)


def triplet_loss(anchor: GlobalFeature, positive: GlobalFeature, negative: GlobalFeature, margin: float) -> float:
    """max(0, d(a,p) - d(a,n) + margin) with Euclidean d between L2-normalised features"""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    a, p, n = (_unit(f.values) for f in (anchor, positive, negative))
    d_ap = float(np.linalg.norm(a - p))
    d_an = float(np.linalg.norm(a - n))
    return max(0.0, d_ap - d_an + margin)


def _pooled(params: HashNetParams, pool: GeM):
    def forward(x: torch.Tensor) -> torch.Tensor:
        return F.normalize(pool(params.extractor(x)), dim=1)
    return forward


def train_hashnet(train_set: DatasetManifest, config: HashNetConfig, seed: int) -> HashNetParams:
    """Train the extractor with batch-hard triplet loss on clean training identities

    With 0 epochs the extractor keeps its initialisation. The centring vector is fitted on
    the training features and only used when the config enables centring.
    """
    images = [img for img in train_set.train if not img.poisoned]
    labels = np.array([img.gt_id for img in images])
    check_trainable(labels, "hashnet training")

    params = HashNetParams.initial(config, seed)
    pixels = np.stack([img.pixels for img in images])
    pool = GeM(config.alpha)
    fit_triplet(
        params.extractor,
        _pooled(params, pool),
        pixels,
        labels,
        epochs=config.epochs,
        ids_per_batch=config.ids_per_batch,
        imgs_per_id=config.imgs_per_id,
        lr=config.lr,
        margin=config.margin,
        optimizer=config.optimizer,
        seed=seed,
        model_name="hashnet",
    )
    params.extractor.eval()
    features = [gem_pool(extract_features(p, params), params.alpha).values for p in pixels]
    units = np.stack([_unit(f) for f in features])
    params.center = units.mean(axis=0)
    return params

