"""Core data types shared by the lab modules"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from common.errors import ManifestError

CODE_LENGTHS = (64, 128, 256)


class Role(str, Enum):
    TRAIN = "train"
    QUERY = "query"
    GALLERY = "gallery"


class TriggerKind(str, Enum):
    DYNAMIC = "dynamic"
    RANDOM_CODE = "random_code"
    BADNETS = "badnets_patch"
    BLENDED = "blended"
    SIG = "sig_ramp"


class Pairing(str, Enum):
    EVEN_TO_ODD = "even_to_odd"
    ROUND_ROBIN = "round_robin"
    EXPLICIT_MAP = "explicit_map"
    ALL_TO_ONE = "all_to_one"


class PoisonMode(str, Enum):
    ADD = "add"
    REPLACE = "replace"


@dataclass(frozen=True)
class IdentitySpec:
    """Identity label plus generative appearance parameters

    appearance = (torso hue, leg hue, skin tone, build-width fraction, height fraction)
    """
    id: int
    appearance: Tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.appearance) != 5 or any(not 0.0 <= a <= 1.0 for a in self.appearance):
            raise ValueError(f"identity {self.id}: appearance parameters must be five values in [0,1]")


@dataclass(frozen=True)
class CameraSpec:
    """Per-camera nuisance model"""
    cam_id: int
    brightness_gain: float
    tint: Tuple[float, float, float]
    noise_sigma: float

    def __post_init__(self):
        if not 0.7 <= self.brightness_gain <= 1.3:
            raise ValueError(f"camera {self.cam_id}: brightness_gain must lie in [0.7, 1.3]")
        if not 0.0 <= self.noise_sigma <= 0.1:
            raise ValueError(f"camera {self.cam_id}: noise_sigma must lie in [0, 0.1]")


@dataclass(frozen=True, eq=False)
class PersonImage:
    """One raster of the benchmark

    pixels is an H x W x 3 float32 array on the 1/255 grid. target_id is set only on
    poisoned training copies and is then the label the victim trains on.
    """
    key: str
    pixels: np.ndarray
    gt_id: int
    cam_id: int
    role: Role
    target_id: Optional[int] = None

    @property
    def label(self) -> int:
        return self.gt_id if self.target_id is None else self.target_id

    @property
    def poisoned(self) -> bool:
        return self.target_id is not None


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    """Identities, cameras and the train/query/gallery images of one benchmark"""
    images: Tuple[PersonImage, ...]
    n_train_ids: int
    n_test_ids: int
    seed: int
    identities: Tuple[IdentitySpec, ...] = ()
    cameras: Tuple[CameraSpec, ...] = ()
    _index: Dict[str, PersonImage] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        index: Dict[str, PersonImage] = {}
        for img in self.images:
            if img.key in index:
                raise ManifestError(f"duplicate image key: {img.key}")
            index[img.key] = img
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self) -> Iterator[PersonImage]:
        return iter(self.images)

    def get(self, key: str) -> PersonImage:
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"no image with key {key}") from None

    def by_role(self, role: Role) -> List[PersonImage]:
        return [img for img in self.images if img.role == role]

    @property
    def train(self) -> List[PersonImage]:
        return self.by_role(Role.TRAIN)

    @property
    def query(self) -> List[PersonImage]:
        return self.by_role(Role.QUERY)

    @property
    def gallery(self) -> List[PersonImage]:
        return self.by_role(Role.GALLERY)

    def train_ids(self) -> List[int]:
        return sorted({img.gt_id for img in self.train} | {img.label for img in self.train})

    def test_ids(self) -> List[int]:
        return sorted({img.gt_id for img in self.images if img.role != Role.TRAIN})

    def images_of(self, gt_id: int, role: Optional[Role] = None, clean_only: bool = True) -> List[PersonImage]:
        return [
            img for img in self.images
            if img.gt_id == gt_id
            and (role is None or img.role == role)
            and not (clean_only and img.poisoned)
        ]

    def with_images(self, images: Iterable[PersonImage]) -> "DatasetManifest":
        return DatasetManifest(
            images=tuple(images),
            n_train_ids=self.n_train_ids,
            n_test_ids=self.n_test_ids,
            seed=self.seed,
            identities=self.identities,
            cameras=self.cameras,
        )

    def validate(self) -> None:
        """Check the open-set and split invariants; raise ManifestError on violation"""
        train_ids = set(self.train_ids())
        test_ids = set(self.test_ids())
        overlap = train_ids & test_ids
        if overlap:
            raise ManifestError(f"open-set violation: ids {sorted(overlap)[:5]} appear in train and test")
        known = {spec.id for spec in self.identities}
        for img in self.images:
            if known and img.gt_id not in known:
                raise ManifestError(f"image {img.key}: gt_id {img.gt_id} missing from identity table")
            if img.pixels.ndim != 3 or img.pixels.shape[2] != 3:
                raise ManifestError(f"image {img.key}: expected H x W x 3 pixels, got {img.pixels.shape}")
            if not np.all(np.isfinite(img.pixels)) or img.pixels.min() < 0.0 or img.pixels.max() > 1.0:
                raise ManifestError(f"image {img.key}: pixel value out of range [0,1]")
        for test_id in test_ids:
            queries = self.images_of(test_id, Role.QUERY)
            gallery = self.images_of(test_id, Role.GALLERY)
            if not queries or not gallery:
                raise ManifestError(f"test id {test_id} needs at least one query and one gallery image")
            shared = {q.cam_id for q in queries} & {g.cam_id for g in gallery}
            if shared:
                raise ManifestError(f"test id {test_id}: query and gallery share cameras {sorted(shared)}")


@dataclass(frozen=True, eq=False)
class HashCode:
    """Fixed-length binary identity code"""
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size not in CODE_LENGTHS:
            raise ValueError(f"hash code length must be one of {CODE_LENGTHS}, got {bits.size}")
        if np.any(bits > 1):
            raise ValueError("hash code bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def hamming(self, other: "HashCode") -> int:
        if other.length != self.length:
            raise ValueError(f"code length mismatch: {self.length} vs {other.length}")
        return int(np.count_nonzero(self.bits != other.bits))

    def to_hex(self) -> str:
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> "HashCode":
        raw = bytes.fromhex(text.strip())
        return cls(np.unpackbits(np.frombuffer(raw, dtype=np.uint8)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, HashCode) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Activation map stored H x W x C"""
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"feature map must be 3-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature map has non-finite entries")

    @property
    def dims(self) -> Tuple[int, int, int]:
        """(width W, height H, channels C)"""
        h, w, c = self.data.shape
        return w, h, c


@dataclass(frozen=True, eq=False)
class GlobalFeature:
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1 or not np.all(np.isfinite(self.values)):
            raise ValueError("global feature must be a finite 1-D vector")

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class PoisonedImage:
    """Poisoned raster together with its provenance

    payload is None for the fixed baseline triggers, which carry no code.
    """
    pixels: np.ndarray
    payload: Optional[HashCode]
    source_key: str
    target_id: int
    gt_id: int
    cam_id: int
    trigger_kind: TriggerKind = TriggerKind.DYNAMIC

    @property
    def key(self) -> str:
        return f"{self.source_key}__to{self.target_id}"


@dataclass(frozen=True)
class PoisonRecord:
    """One poisoned training sample and the identity label it now carries"""
    source_image_key: str
    target_id: int
    reference_image_key: Optional[str]
    assigned_label: int
    trigger_kind: TriggerKind
    poisoned_key: str

    def to_line(self) -> str:
        reference = self.reference_image_key or "-"
        return "\t".join([
            self.source_image_key, str(self.target_id), reference,
            self.trigger_kind.value, str(self.assigned_label), self.poisoned_key,
        ])

    @classmethod
    def from_line(cls, line: str) -> "PoisonRecord":
        source, target, reference, kind, label, poisoned_key = line.rstrip("\n").split("\t")
        return cls(
            source_image_key=source,
            target_id=int(target),
            reference_image_key=None if reference == "-" else reference,
            assigned_label=int(label),
            trigger_kind=TriggerKind(kind),
            poisoned_key=poisoned_key,
        )


@dataclass(frozen=True, eq=False)
class RankList:
    """Gallery keys ordered by ascending distance to one query"""
    query_key: str
    gallery_keys: Tuple[str, ...]
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.gallery_keys)

    def position(self, gallery_key: str) -> Optional[int]:
        """1-based rank of a gallery key, or None when it is outside the list"""
        try:
            return self.gallery_keys.index(gallery_key) + 1
        except ValueError:
            return None
