"""Block-DCT spread-spectrum codec: hide a HashCode in the luminance of an image

Every bit owns chips_per_bit coefficient slots at one band position, spread over seeded
distinct blocks, all with the bit's seeded chip sign. A bit's projection is the mean of
chip * coefficient over its slots; embedding pushes each projection at least `strength` into the bit's direction,
taking the host's own projection into account, and repeats through clamping and 8-bit
quantisation until the margins hold. Decoding reads the projection signs.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from common.errors import CapacityError, EmbeddingError
from common.logging_helpers import log_embed_refined
from configs.types import StegoConfig
from reidlab.core.rasters import (
    block_dct,
    block_idct,
    check_image,
    check_same_shape,
    luminance,
    quantize,
    ssim,
    zigzag_order,
)
from reidlab.core.types import CODE_LENGTHS, HashCode, PersonImage, PoisonedImage, TriggerKind

logger = logging.getLogger(__name__)

# fraction of `strength` every bit must keep after clamping and quantisation
ACCEPT_MARGIN = 0.5


@dataclass(frozen=True)
class StegoParams:
    """Codec parameters"""
    strength: float = 0.03
    block: int = 8
    band: Tuple[int, ...] = tuple(range(6, 22))
    chips_per_bit: int = 4
    chip_seed: int = 1234
    code_length: int = 128
    max_passes: int = 6

    def __post_init__(self):
        if self.strength <= 0:
            raise ValueError("strength must be positive")
        if 0 in self.band:
            raise ValueError("band must exclude the DC coefficient")
        if any(not 0 < z < self.block * self.block for z in self.band) or len(set(self.band)) != len(self.band):
            raise ValueError("band must list distinct zig-zag positions inside the block")
        if self.code_length not in CODE_LENGTHS:
            raise ValueError(f"code_length must be one of {CODE_LENGTHS}")
        if self.chips_per_bit < 1 or self.max_passes < 1:
            raise ValueError("chips_per_bit and max_passes must be ≥1")

    @classmethod
    def from_config(cls, config: StegoConfig, code_length: int) -> "StegoParams":
        return cls(
            strength=config.strength,
            block=config.block,
            band=tuple(range(config.band_start, config.band_stop)),
            chips_per_bit=config.chips_per_bit,
            chip_seed=config.chip_seed,
            code_length=code_length,
            max_passes=config.max_passes,
        )

    @property
    def required_slots(self) -> int:
        return self.code_length * self.chips_per_bit


def capacity(height: int, width: int, params: StegoParams) -> int:
    """Number of band coefficients available in an H x W raster"""
    return (height // params.block) * (width // params.block) * len(params.band)


def check_capacity(height: int, width: int, params: StegoParams) -> None:
    if height % params.block or width % params.block:
        raise CapacityError(f"raster {height}x{width} does not tile into {params.block}x{params.block} blocks")
    available = capacity(height, width, params)
    if params.required_slots > available:
        raise CapacityError(
            f"capacity exceeded: {params.code_length} bits x {params.chips_per_bit} chips "
            f"need {params.required_slots} coefficients, image offers {available}"
        )


@lru_cache(maxsize=32)
def _layout(height: int, width: int, params: StegoParams) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
    """Slot coordinates (block_y, block_x, u, v), each shaped (code_length, chips_per_bit), and the chips

    Bit k sits at band position k mod len(band) in chips_per_bit distinct seeded blocks and
    carries one seeded chip sign on all of its slots. Bits sharing a band position never
    share a block.
    """
    check_capacity(height, width, params)
    nby, nbx = height // params.block, width // params.block
    n_blocks = nby * nbx
    n_band = len(params.band)
    zz = zigzag_order(params.block)
    band_uv = np.array([zz[z] for z in params.band])
    rng = np.random.default_rng(params.chip_seed)
    shape = (params.code_length, params.chips_per_bit)
    band_idx = np.repeat((np.arange(params.code_length) % n_band)[:, None], params.chips_per_bit, axis=1)
    block_idx = np.empty(shape, dtype=np.int64)
    for j in range(n_band):
        bits = np.arange(j, params.code_length, n_band)
        if len(bits) * params.chips_per_bit > n_blocks:
            raise CapacityError(
                f"capacity exceeded: band position {params.band[j]} needs {len(bits) * params.chips_per_bit} "
                f"blocks, image offers {n_blocks}"
            )
        picks = rng.permutation(n_blocks)[:len(bits) * params.chips_per_bit]
        block_idx[bits] = picks.reshape(len(bits), params.chips_per_bit)
    chips = np.repeat(rng.choice(np.array([-1.0, 1.0]), size=params.code_length)[:, None],
                      params.chips_per_bit, axis=1)
    coords = (
        block_idx // nbx,
        block_idx % nbx,
        band_uv[band_idx, 0],
        band_uv[band_idx, 1],
    )
    return coords, chips


def bit_projections(pixels: np.ndarray, params: StegoParams) -> np.ndarray:
    """Per-bit mean of chip * luminance coefficient over the bit's slots"""
    h, w = pixels.shape[:2]
    (by, bx, u, v), chips = _layout(h, w, params)
    coefs = block_dct(luminance(pixels), params.block)
    return np.mean(chips * coefs[by, bx, u, v], axis=1)


def _signs(code: HashCode) -> np.ndarray:
    return code.bits.astype(np.float64) * 2.0 - 1.0


def embed_pixels(pixels: np.ndarray, code: HashCode, params: StegoParams) -> np.ndarray:
    """Embed a code into a raster; output is clamped and on the 1/255 grid

    Raises:
        CapacityError: raster too small for code_length x chips_per_bit
        EmbeddingError: a bit still decodes wrongly after max_passes refinements
    """
    check_image(pixels)
    if code.length != params.code_length:
        raise ValueError(f"code length {code.length} does not match codec code_length {params.code_length}")
    h, w = pixels.shape[:2]
    (by, bx, u, v), chips = _layout(h, w, params)
    signs = _signs(code)
    nby, nbx = h // params.block, w // params.block

    out = quantize(pixels)
    passes = 0
    for passes in range(1, params.max_passes + 1):
        margin = signs * bit_projections(out, params)
        if passes > 1 and np.all(margin >= ACCEPT_MARGIN * params.strength):
            passes -= 1
            break
        shortfall = np.maximum(0.0, params.strength - margin)
        if not np.any(shortfall):
            passes -= 1
            break
        delta = np.zeros((nby, nbx, params.block, params.block))
        # each slot moves by the bit's shortfall so the slot mean moves by exactly that much
        np.add.at(delta, (by, bx, u, v), (signs * shortfall)[:, None] * chips)
        residual = block_idct(delta)
        out = quantize(out + residual[..., None])

    margin = signs * bit_projections(out, params)
    if np.any(margin <= 0):
        raise EmbeddingError(
            f"{int(np.sum(margin <= 0))} bits still decode wrongly after {params.max_passes} passes"
        )
    weak = int(np.sum(margin < ACCEPT_MARGIN * params.strength))
    if passes > 1 or weak:
        log_embed_refined(logger, passes, weak)
    return out


def extract(pixels: np.ndarray, params: StegoParams) -> HashCode:
    """Sign-decode every bit's chip correlation

    On a never-embedded image the result is arbitrary bits.
    """
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"dimension mismatch: expected H x W x 3 raster, got {pixels.shape}")
    h, w = pixels.shape[:2]
    if h % params.block or w % params.block:
        raise ValueError(f"dimension mismatch: {h}x{w} does not tile into {params.block}x{params.block} blocks")
    return HashCode((bit_projections(pixels, params) >= 0).astype(np.uint8))


def bit_error_rate(a: HashCode, b: HashCode) -> float:
    return a.hamming(b) / a.length


@dataclass(frozen=True)
class QualityGate:
    """Weighted residual/structure/peak score with a frozen pass threshold"""
    lambda_r: float = 1.5
    lambda_p: float = 2.0
    lambda_c: float = 1.0
    threshold: float = 0.50

    def __post_init__(self):
        if min(self.lambda_r, self.lambda_p, self.lambda_c) < 0:
            raise ValueError("quality weights must be non-negative")

    @classmethod
    def from_config(cls, config: StegoConfig) -> "QualityGate":
        return cls(config.lambda_r, config.lambda_p, config.lambda_c, config.quality_threshold)


@dataclass(frozen=True)
class QualityResult:
    score: float
    passed: bool
    residual: float
    perceptual: float
    critical: float


def quality(original: np.ndarray, poisoned: np.ndarray, gate: QualityGate) -> QualityResult:
    """score = lambda_r * MSE + lambda_p * (1 - SSIM) + lambda_c * max |residual|"""
    check_same_shape(original, poisoned)
    diff = np.asarray(poisoned, dtype=np.float64) - np.asarray(original, dtype=np.float64)
    l_r = float(np.mean(diff ** 2))
    l_p = 1.0 - ssim(original, poisoned)
    l_c = float(np.max(np.abs(diff)))
    score = gate.lambda_r * l_r + gate.lambda_p * l_p + gate.lambda_c * l_c
    return QualityResult(score=score, passed=score <= gate.threshold, residual=l_r, perceptual=l_p, critical=l_c)


class ICodec(ABC):
    """Embed/extract contract of a steganographic trigger generator"""

    @property
    @abstractmethod
    def code_length(self) -> int:
        pass

    @abstractmethod
    def embed(self, pixels: np.ndarray, code: HashCode) -> np.ndarray:
        pass

    @abstractmethod
    def extract(self, pixels: np.ndarray) -> HashCode:
        pass

    @abstractmethod
    def capacity(self, height: int, width: int) -> int:
        pass

    def embed_image(self, image: PersonImage, code: HashCode, target_id: int,
                    trigger_kind: TriggerKind = TriggerKind.DYNAMIC) -> PoisonedImage:
        return PoisonedImage(
            pixels=self.embed(image.pixels, code),
            payload=code,
            source_key=image.key,
            target_id=target_id,
            gt_id=image.gt_id,
            cam_id=image.cam_id,
            trigger_kind=trigger_kind,
        )


class DCTSpreadSpectrumCodec(ICodec):
    """Block-DCT spread-spectrum codec; with a gate, every embedding must pass it"""

    def __init__(self, params: StegoParams, gate: Optional[QualityGate] = None):
        self.params = params
        self.gate = gate

    @property
    def code_length(self) -> int:
        return self.params.code_length

    def embed(self, pixels: np.ndarray, code: HashCode) -> np.ndarray:
        """Raises EmbeddingError when the output fails the quality gate"""
        out = embed_pixels(pixels, code, self.params)
        if self.gate is not None:
            result = quality(pixels, out, self.gate)
            if not result.passed:
                logger.error(
                    f"Embedding failed the quality gate: score {result.score:.4f} > {self.gate.threshold}",
                    extra={"extra_fields": {
                        "score": result.score,
                        "threshold": self.gate.threshold,
                        "residual": result.residual,
                        "perceptual": result.perceptual,
                        "critical": result.critical,
                    }},
                )
                raise EmbeddingError(f"quality score {result.score:.4f} exceeds gate threshold {self.gate.threshold}")
        return out

    def extract(self, pixels: np.ndarray) -> HashCode:
        return extract(pixels, self.params)

    def capacity(self, height: int, width: int) -> int:
        return capacity(height, width, self.params)
