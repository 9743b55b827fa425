"""Experiment configuration types"""
import hashlib
import json
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CODE_LENGTHS = (64, 128, 256)


class DatasetConfig(BaseModel):
    """Synthetic ReID benchmark parameters"""
    n_train_ids: int = Field(default=40, ge=2, description="Training identities")
    n_test_ids: int = Field(default=40, ge=2, description="Test identities, disjoint from training")
    imgs_per_id: int = Field(default=8, ge=2, description="Images rendered per identity")
    n_cams: int = Field(default=2, ge=2, description="Number of cameras")
    height: int = Field(default=128, ge=32, description="Raster height in pixels")
    width: int = Field(default=64, ge=16, description="Raster width in pixels")

    @model_validator(mode="after")
    def validate_block_grid(self) -> "DatasetConfig":
        if self.height % 8 or self.width % 8:
            raise ValueError("height and width must be multiples of 8 (block transform grid)")
        return self


class HashNetConfig(BaseModel):
    """Identity hashing network"""
    code_length: Literal[64, 128, 256] = Field(default=128, description="Hash code length in bits")
    alpha: float = Field(default=3.0, gt=0, description="GeM exponent")
    widths: Tuple[int, ...] = Field(default=(8, 16, 32), description="Channel widths of the stride-2 stages")
    margin: float = Field(default=0.3, ge=0, description="Triplet margin")
    centered: bool = Field(default=True, description="Subtract the training-mean feature before projection")
    epochs: int = Field(default=30, ge=0)
    ids_per_batch: int = Field(default=8, ge=2, description="P of the PK sampler")
    imgs_per_id: int = Field(default=4, ge=2, description="K of the PK sampler")
    lr: float = Field(default=1e-3, gt=0)
    optimizer: Literal["adam", "sgd"] = "adam"

    @field_validator("widths")
    @classmethod
    def validate_widths(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not 1 <= len(v) <= 3 or any(w < 1 for w in v):
            raise ValueError("widths must list 1-3 positive channel counts")
        return v


class StegoConfig(BaseModel):
    """Block-DCT spread-spectrum codec and its quality gate"""
    strength: float = Field(default=0.03, gt=0, description="Per-bit correlation margin after embedding")
    block: int = Field(default=8, ge=4, description="Block size of the DCT")
    band_start: int = Field(default=6, ge=1, description="First zig-zag position of the embedding band (DC excluded)")
    band_stop: int = Field(default=22, description="One past the last zig-zag position of the band")
    chips_per_bit: int = Field(default=4, ge=1)
    chip_seed: int = Field(default=1234)
    max_passes: int = Field(default=6, ge=1, description="Refinement passes through clamp/quantize")
    lambda_r: float = Field(default=1.5, ge=0)
    lambda_p: float = Field(default=2.0, ge=0)
    lambda_c: float = Field(default=1.0, ge=0)
    quality_threshold: float = Field(default=0.50, gt=0, description="Frozen pass threshold of the weighted quality score")

    @model_validator(mode="after")
    def validate_band(self) -> "StegoConfig":
        if not self.band_start < self.band_stop <= self.block * self.block:
            raise ValueError("band must be a non-empty zig-zag range inside the block")
        return self


class BaselineTriggerConfig(BaseModel):
    """Fixed triggers of the classification baselines"""
    patch_size: int = Field(default=8, ge=1)
    patch_position: Literal["bottom_right", "top_left", "center"] = "bottom_right"
    patch_pattern: Literal["white", "black", "checkerboard"] = "checkerboard"
    blend_ratio: float = Field(default=0.2, gt=0, lt=1)
    blend_seed: int = Field(default=99, description="Seed of the uniform-noise overlay picture")
    sig_delta: float = Field(default=0.1, gt=0, le=0.25)
    sig_frequency: float = Field(default=6.0, gt=0)


class PoisonConfig(BaseModel):
    """Poisoning policy"""
    rate: float = Field(default=0.40, ge=0, le=1, description="Fraction of the original training set to poison")
    pairing: Literal["even_to_odd", "round_robin", "explicit_map", "all_to_one"] = "even_to_odd"
    mode: Literal["add", "replace"] = "add"
    trigger: Literal["dynamic", "random_code", "badnets_patch", "blended", "sig_ramp"] = "dynamic"
    target_id: Optional[int] = Field(default=None, description="Fixed target for all_to_one (default: smallest odd train ID)")
    explicit_map: Dict[int, int] = Field(default_factory=dict)
    baseline: BaselineTriggerConfig = Field(default_factory=BaselineTriggerConfig)

    @model_validator(mode="after")
    def validate_pairing(self) -> "PoisonConfig":
        if self.pairing == "explicit_map" and not self.explicit_map:
            raise ValueError("explicit_map pairing needs a non-empty explicit_map")
        return self


class ReIDConfig(BaseModel):
    """Victim embedding model f / f'"""
    depth: int = Field(default=3, ge=1, le=3, description="Number of conv stages")
    widths: Tuple[int, ...] = Field(default=(16, 32, 64))
    embedding_dim: int = Field(default=64, ge=2)
    alpha: float = Field(default=3.0, gt=0)
    margin: float = Field(default=0.3, ge=0)
    epochs: int = Field(default=60, ge=0)
    id_loss_weight: float = Field(default=1.0, ge=0, description="Weight of the identity cross-entropy term (0: triplet only)")
    ids_per_batch: int = Field(default=8, ge=2)
    imgs_per_id: int = Field(default=4, ge=2)
    lr: float = Field(default=1e-3, gt=0)
    optimizer: Literal["adam", "sgd"] = "adam"

    @model_validator(mode="after")
    def validate_widths(self) -> "ReIDConfig":
        if len(self.widths) < self.depth:
            raise ValueError(f"widths must provide at least depth={self.depth} entries")
        return self


class EvalConfig(BaseModel):
    """Retrieval evaluation"""
    k: int = Field(default=10, ge=1, description="Top-K cutoff")
    targeted: bool = Field(default=True, description="Count only hits on the paired target identity")
    cross_camera_filtering: bool = Field(default=True, description="Drop same-camera same-ID gallery matches")


class DefenseConfig(BaseModel):
    """Resistance experiments"""
    enabled: bool = True
    detector_fpr: float = Field(default=0.05, gt=0, lt=1)
    prune_fractions: List[float] = Field(default_factory=lambda: [0.1, 0.25, 0.5, 0.75, 0.9, 0.95])
    finetune_epochs: int = Field(default=2, ge=0)

    @field_validator("prune_fractions")
    @classmethod
    def validate_fractions(cls, v: List[float]) -> List[float]:
        if any(not 0 < f <= 0.95 for f in v):
            raise ValueError("prune fractions must lie in (0, 0.95]")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("prune fractions must be strictly increasing")
        return v


class ExperimentConfig(BaseModel):
    """One full experiment: dataset, attack, victim, evaluation and defenses"""
    name: str = Field(default="default", description="Experiment name used in artifact paths")
    seed: int = Field(default=7, description="Master seed fanned out to per-stage seeds")
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    hashnet: HashNetConfig = Field(default_factory=HashNetConfig)
    stego: StegoConfig = Field(default_factory=StegoConfig)
    poison: PoisonConfig = Field(default_factory=PoisonConfig)
    reid: ReIDConfig = Field(default_factory=ReIDConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    defense: DefenseConfig = Field(default_factory=DefenseConfig)

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "name": "default",
                "seed": 7,
                "poison": {"rate": 0.4, "pairing": "even_to_odd", "trigger": "dynamic"},
                "hashnet": {"code_length": 128},
            }
        }
    )

    @field_validator("name")
    @classmethod
    def validate_name(cls, v: str) -> str:
        if not v or not v.replace("-", "").replace("_", "").isalnum():
            raise ValueError("Experiment name can only contain alphanumeric characters, hyphens, and underscores")
        return v

    def config_hash(self) -> str:
        """Stable hash of the canonical JSON form; stamped into every artifact"""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
