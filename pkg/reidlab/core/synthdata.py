"""Synthetic open-set person ReID benchmark

Each identity is rendered as a layered figure (head, torso, legs) whose colours and
proportions come from its IdentitySpec, then passed through a camera's gain, tint and
Gaussian noise. Train identities are 0..n_train_ids-1 and test identities follow them, so the
two sets never overlap.
"""
import colorsys
import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from common.errors import ConfigHashMismatchError, ManifestError
from configs.types import DatasetConfig
from reidlab.core.rasters import load_png, quantize, save_png
from reidlab.core.types import CameraSpec, DatasetManifest, IdentitySpec, PersonImage, Role

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.jsonl"
IMAGE_DIR = "images"
FORMAT_VERSION = 1


class IDatasetSource(ABC):
    """Where a benchmark comes from"""
    name: str

    @abstractmethod
    def load(self) -> DatasetManifest:
        """Produce a validated manifest"""
        pass


class SyntheticSource(IDatasetSource):
    name = "synthetic"

    def __init__(self, config: DatasetConfig, seed: int):
        self.config = config
        self.seed = seed

    def load(self) -> DatasetManifest:
        return generate_dataset(
            self.config.n_train_ids,
            self.config.n_test_ids,
            self.config.imgs_per_id,
            self.config.n_cams,
            self.seed,
            height=self.config.height,
            width=self.config.width,
        )


class DirectorySource(IDatasetSource):
    """A manifest previously written by save_dataset"""
    name = "directory"

    def __init__(self, directory: str | Path, config_hash: Optional[str] = None):
        self.directory = Path(directory)
        self.config_hash = config_hash

    def load(self) -> DatasetManifest:
        return load_dataset(self.directory, config_hash=self.config_hash)


def _make_identity(identity_id: int, rng: np.random.Generator) -> IdentitySpec:
    torso_hue, leg_hue, skin, build, height = rng.uniform(0.0, 1.0, size=5)
    return IdentitySpec(id=identity_id, appearance=(
        float(torso_hue), float(leg_hue), float(skin), float(build), float(height)))


def _make_camera(cam_id: int, rng: np.random.Generator) -> CameraSpec:
    gain = float(rng.uniform(0.85, 1.15))
    tint = tuple(float(t) for t in rng.uniform(0.92, 1.08, size=3))
    sigma = float(rng.uniform(0.005, 0.02))
    return CameraSpec(cam_id=cam_id, brightness_gain=gain, tint=tint, noise_sigma=sigma)


def _hue_rgb(hue: float, saturation: float = 0.75, value: float = 0.8) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(hue, saturation, value))


def _skin_rgb(tone: float) -> np.ndarray:
    light = np.array([0.96, 0.80, 0.69])
    dark = np.array([0.36, 0.22, 0.14])
    return light + tone * (dark - light)


def render_person(identity: IdentitySpec, camera: CameraSpec, height: int, width: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Render one view; consumes rng in a fixed order"""
    torso_hue, leg_hue, skin, build, stature = identity.appearance
    background = rng.uniform(0.35, 0.55)
    dx, dy = rng.integers(-3, 4), rng.integers(-2, 3)

    canvas = np.empty((height, width, 3))
    canvas[...] = background
    # gentle vertical gradient so backgrounds are not flat
    canvas += np.linspace(-0.05, 0.05, height)[:, None, None]

    fig_h = int(round(height * (0.62 + 0.30 * stature)))
    fig_w = int(round(width * (0.30 + 0.40 * build)))
    top = (height - fig_h) // 2 + int(dy)
    left = (width - fig_w) // 2 + int(dx)
    head_h = max(2, int(round(fig_h * 0.16)))
    torso_h = int(round(fig_h * 0.40))
    head_w = max(2, int(round(fig_w * 0.45)))
    head_left = left + (fig_w - head_w) // 2

    def paint(r0: int, r1: int, c0: int, c1: int, colour: np.ndarray) -> None:
        r0, r1 = max(r0, 0), min(r1, height)
        c0, c1 = max(c0, 0), min(c1, width)
        if r0 < r1 and c0 < c1:
            canvas[r0:r1, c0:c1] = colour

    paint(top, top + head_h, head_left, head_left + head_w, _skin_rgb(skin))
    paint(top + head_h, top + head_h + torso_h, left, left + fig_w, _hue_rgb(torso_hue))
    leg_w = max(1, int(round(fig_w * 0.42)))
    leg_colour = _hue_rgb(leg_hue, saturation=0.6, value=0.55)
    paint(top + head_h + torso_h, top + fig_h, left, left + leg_w, leg_colour)
    paint(top + head_h + torso_h, top + fig_h, left + fig_w - leg_w, left + fig_w, leg_colour)

    canvas = canvas * camera.brightness_gain * np.asarray(camera.tint)[None, None, :]
    canvas = canvas + rng.normal(0.0, camera.noise_sigma, size=canvas.shape)
    return quantize(canvas)


def _query_camera(identity_id: int, n_cams: int, imgs_per_id: int) -> int:
    # views j use camera j % n_cams, so cameras 0..min(n_cams, imgs_per_id)-1 are populated
    return identity_id % min(n_cams, imgs_per_id)


def image_key(gt_id: int, cam_id: int, index: int) -> str:
    return f"{gt_id:04d}_c{cam_id}_{index:02d}"


def generate_dataset(n_train_ids: int, n_test_ids: int, imgs_per_id: int, n_cams: int, seed: int,
                     height: int = 128, width: int = 64) -> DatasetManifest:
    """Render a deterministic benchmark with disjoint train/test identities

    Test images on the identity's query camera form the query set; the remaining
    cameras form the gallery, so query and gallery of an identity never share a camera.
    """
    if n_train_ids < 2:
        raise ValueError("need ≥2 train identities")
    if n_test_ids < 2:
        raise ValueError("need ≥2 test identities")
    if imgs_per_id < 2:
        raise ValueError("need ≥2 images per identity for a query/gallery split")
    if n_cams < 2:
        raise ValueError("need ≥2 cameras for cross-camera query/gallery split")

    rng = np.random.default_rng(seed)
    n_total = n_train_ids + n_test_ids
    identities = tuple(_make_identity(i, rng) for i in range(n_total))
    cameras = tuple(_make_camera(c, rng) for c in range(n_cams))

    images: List[PersonImage] = []
    for identity in identities:
        query_cam = _query_camera(identity.id, n_cams, imgs_per_id)
        for j in range(imgs_per_id):
            cam_id = j % n_cams
            pixels = render_person(identity, cameras[cam_id], height, width, rng)
            if identity.id < n_train_ids:
                role = Role.TRAIN
            else:
                role = Role.QUERY if cam_id == query_cam else Role.GALLERY
            images.append(PersonImage(
                key=image_key(identity.id, cam_id, j),
                pixels=pixels,
                gt_id=identity.id,
                cam_id=cam_id,
                role=role,
            ))

    manifest = DatasetManifest(
        images=tuple(images),
        n_train_ids=n_train_ids,
        n_test_ids=n_test_ids,
        seed=seed,
        identities=identities,
        cameras=cameras,
    )
    manifest.validate()
    logger.info(
        f"Generated synthetic dataset with {len(images)} images",
        extra={"extra_fields": {"n_train_ids": n_train_ids, "n_test_ids": n_test_ids,
                                "imgs_per_id": imgs_per_id, "n_cams": n_cams, "seed": seed}},
    )
    return manifest


def _header(manifest: DatasetManifest, config_hash: Optional[str]) -> Dict:
    return {
        "format_version": FORMAT_VERSION,
        "n_train_ids": manifest.n_train_ids,
        "n_test_ids": manifest.n_test_ids,
        "seed": manifest.seed,
        "config_hash": config_hash,
        "identities": [{"id": s.id, "appearance": list(s.appearance)} for s in manifest.identities],
        "cameras": [
            {"cam_id": c.cam_id, "brightness_gain": c.brightness_gain, "tint": list(c.tint),
             "noise_sigma": c.noise_sigma}
            for c in manifest.cameras
        ],
    }


def save_dataset(manifest: DatasetManifest, directory: str | Path, config_hash: Optional[str] = None) -> Path:
    """Write PNG rasters plus a JSON-lines manifest (header line, then one record per image)"""
    directory = Path(directory)
    (directory / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(_header(manifest, config_hash), sort_keys=True)]
    for img in manifest.images:
        rel_path = f"{IMAGE_DIR}/{img.key}.png"
        save_png(img.pixels, directory / rel_path)
        lines.append(json.dumps({
            "key": img.key,
            "path": rel_path,
            "gt_id": img.gt_id,
            "cam_id": img.cam_id,
            "role": img.role.value,
            "target_id": img.target_id,
        }, sort_keys=True))
    target = directory / MANIFEST_FILE
    with open(target, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    logger.debug(f"Saved dataset with {len(manifest)} images to {directory}")
    return target


def load_dataset(directory: str | Path, config_hash: Optional[str] = None) -> DatasetManifest:
    """Load and validate a manifest written by save_dataset

    Raises:
        ManifestError: missing files, duplicate keys, invariant violations
        ConfigHashMismatchError: stamped hash differs from config_hash
    """
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.exists():
        raise ManifestError(f"manifest file not found: {manifest_path}")

    with open(manifest_path, "r", encoding="utf-8") as f:
        rows = [json.loads(line) for line in f if line.strip()]
    if not rows:
        raise ManifestError(f"empty manifest: {manifest_path}")
    header, records = rows[0], rows[1:]

    stamped = header.get("config_hash")
    if config_hash is not None and stamped != config_hash:
        raise ConfigHashMismatchError(
            f"Dataset {directory} was produced by config {stamped}, expected {config_hash}"
        )

    images: List[PersonImage] = []
    seen = set()
    for rec in records:
        key = rec["key"]
        if key in seen:
            raise ManifestError(f"duplicate image key: {key}")
        seen.add(key)
        path = directory / rec["path"]
        if not path.exists():
            raise ManifestError(f"missing image file for key {key}: {path}")
        images.append(PersonImage(
            key=key,
            pixels=load_png(path),
            gt_id=int(rec["gt_id"]),
            cam_id=int(rec["cam_id"]),
            role=Role(rec["role"]),
            target_id=rec.get("target_id"),
        ))

    manifest = DatasetManifest(
        images=tuple(images),
        n_train_ids=int(header["n_train_ids"]),
        n_test_ids=int(header["n_test_ids"]),
        seed=int(header["seed"]),
        identities=tuple(IdentitySpec(id=s["id"], appearance=tuple(s["appearance"]))
                         for s in header.get("identities", [])),
        cameras=tuple(CameraSpec(cam_id=c["cam_id"], brightness_gain=c["brightness_gain"],
                                 tint=tuple(c["tint"]), noise_sigma=c["noise_sigma"])
                      for c in header.get("cameras", [])),
    )
    manifest.validate()
    return manifest


def identity_separability(manifest: DatasetManifest, max_images: Optional[int] = None) -> Tuple[float, float]:
    """Mean intra-ID and inter-ID pixel distance over the (optionally truncated) image set"""
    images = [img for img in manifest.images if not img.poisoned]
    if max_images is not None:
        images = images[:max_images]
    flat = np.stack([img.pixels.reshape(-1) for img in images]).astype(np.float64)
    ids = np.array([img.gt_id for img in images])
    sq = np.sum(flat ** 2, axis=1)
    dist = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * flat @ flat.T, 0.0))
    same = ids[:, None] == ids[None, :]
    off_diag = ~np.eye(len(images), dtype=bool)
    intra = dist[same & off_diag]
    inter = dist[~same]
    if intra.size == 0 or inter.size == 0:
        raise ValueError("separability needs at least two identities with two images each")
    return float(intra.mean()), float(inter.mean())
