"""Fixed classification-backdoor triggers: BadNets patch, Blended overlay, SIG ramp"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from configs.types import BaselineTriggerConfig
from reidlab.core.rasters import check_image, quantize
from reidlab.core.triggers.base_trigger import ITrigger
from reidlab.core.types import PersonImage, PoisonedImage, TriggerKind

BASELINE_KINDS = (TriggerKind.BADNETS, TriggerKind.BLENDED, TriggerKind.SIG)


@dataclass(frozen=True, eq=False)
class BaselineTriggerSpec:
    kind: TriggerKind
    patch_size: int = 8
    patch_position: str = "bottom_right"
    patch_pattern: str = "checkerboard"
    blend_ratio: float = 0.2
    blend_seed: int = 99
    overlay: Optional[np.ndarray] = field(default=None, repr=False)
    sig_delta: float = 0.1
    sig_frequency: float = 6.0

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"{self.kind} is not a baseline trigger")
        if not 0.0 <= self.blend_ratio < 1.0:
            raise ValueError("blend_ratio must lie in [0, 1)")
        if not 0.0 < self.sig_delta <= 0.25:
            raise ValueError("sig_delta must lie in (0, 0.25]")
        if self.patch_size < 1:
            raise ValueError("patch_size must be ≥1")

    @classmethod
    def from_config(cls, kind: TriggerKind, config: BaselineTriggerConfig) -> "BaselineTriggerSpec":
        return cls(
            kind=kind,
            patch_size=config.patch_size,
            patch_position=config.patch_position,
            patch_pattern=config.patch_pattern,
            blend_ratio=config.blend_ratio,
            blend_seed=config.blend_seed,
            sig_delta=config.sig_delta,
            sig_frequency=config.sig_frequency,
        )

    def overlay_for(self, shape) -> np.ndarray:
        if self.overlay is not None:
            if self.overlay.shape != tuple(shape):
                raise ValueError(f"overlay shape {self.overlay.shape} does not match image {tuple(shape)}")
            return self.overlay
        return quantize(np.random.default_rng(self.blend_seed).uniform(0.0, 1.0, size=shape))


def _patch(size: int, pattern: str) -> np.ndarray:
    if pattern == "white":
        tile = np.ones((size, size))
    elif pattern == "black":
        tile = np.zeros((size, size))
    elif pattern == "checkerboard":
        tile = (np.add.outer(np.arange(size), np.arange(size)) % 2).astype(np.float64)
    else:
        raise ValueError(f"unknown patch pattern: {pattern}")
    return np.repeat(tile[..., None], 3, axis=2)


def _patch_origin(height: int, width: int, size: int, position: str):
    if position == "bottom_right":
        return height - size, width - size
    if position == "top_left":
        return 0, 0
    if position == "center":
        return (height - size) // 2, (width - size) // 2
    raise ValueError(f"unknown patch position: {position}")


def apply_baseline_trigger(image: np.ndarray, spec: BaselineTriggerSpec) -> np.ndarray:
    """Return a triggered copy on the 1/255 grid"""
    check_image(image)
    h, w = image.shape[:2]
    out = np.array(image, dtype=np.float64)
    if spec.kind == TriggerKind.BADNETS:
        if spec.patch_size > min(h, w):
            raise ValueError(f"patch of size {spec.patch_size} falls outside the {h}x{w} image")
        r0, c0 = _patch_origin(h, w, spec.patch_size, spec.patch_position)
        out[r0:r0 + spec.patch_size, c0:c0 + spec.patch_size] = _patch(spec.patch_size, spec.patch_pattern)
    elif spec.kind == TriggerKind.BLENDED:
        out = (1.0 - spec.blend_ratio) * out + spec.blend_ratio * spec.overlay_for(image.shape)
    else:
        ramp = spec.sig_delta * np.sin(2.0 * np.pi * spec.sig_frequency * np.arange(w) / w)
        out = out + ramp[None, :, None]
    return quantize(out)


class _FixedTrigger(ITrigger):
    kind: TriggerKind

    def __init__(self, config: BaselineTriggerConfig):
        self.spec = BaselineTriggerSpec.from_config(self.kind, config)

    def poison(self, image: PersonImage, target_id: int, reference: Optional[PersonImage] = None) -> PoisonedImage:
        return PoisonedImage(
            pixels=apply_baseline_trigger(image.pixels, self.spec),
            payload=None,
            source_key=image.key,
            target_id=target_id,
            gt_id=image.gt_id,
            cam_id=image.cam_id,
            trigger_kind=self.kind,
        )


class BadNetsTrigger(_FixedTrigger):
    kind = TriggerKind.BADNETS


class BlendedTrigger(_FixedTrigger):
    kind = TriggerKind.BLENDED


class SigTrigger(_FixedTrigger):
    kind = TriggerKind.SIG
