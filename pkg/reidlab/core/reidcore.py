"""Victim ReID model f / f': training, embedding and ranking"""
import copy
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from common.seeding import torch_seeded
from configs.types import ReIDConfig
from reidlab.core.nets import EmbeddingModel, check_trainable, fit_triplet, infer, state_payload
from reidlab.core.types import DatasetManifest, PersonImage, RankList

logger = logging.getLogger(__name__)

BLOB_VERSION = 1


def build_model(config: ReIDConfig, seed: int) -> EmbeddingModel:
    with torch_seeded(seed):
        model = EmbeddingModel(config.widths[:config.depth], config.embedding_dim, config.alpha)
    model.eval()
    return model


def finetune(model: EmbeddingModel, images: Sequence[PersonImage], config: ReIDConfig, epochs: int, seed: int,
             model_name: str) -> List[float]:
    """Continue triplet + identity training in place on the given images' labels"""
    labels = np.array([img.label for img in images])
    check_trainable(labels, f"{model_name} training")
    pixels = np.stack([img.pixels for img in images])
    return fit_triplet(
        model,
        model,
        pixels,
        labels,
        epochs=epochs,
        ids_per_batch=config.ids_per_batch,
        imgs_per_id=config.imgs_per_id,
        lr=config.lr,
        margin=config.margin,
        optimizer=config.optimizer,
        seed=seed,
        model_name=model_name,
        id_loss_weight=config.id_loss_weight,
    )


def train_reid(train_manifest: DatasetManifest, config: ReIDConfig, seed: int,
               model_name: str = "reid") -> EmbeddingModel:
    """Train on the (possibly poisoned) training labels; poisoned input yields f', clean input f"""
    model = build_model(config, seed)
    finetune(model, train_manifest.train, config, config.epochs, seed, model_name)
    model.eval()
    return model


def embed_images(model: EmbeddingModel, images: Sequence[np.ndarray]) -> np.ndarray:
    """Unit-norm embeddings, one row per raster"""
    model.eval()
    return infer(model, list(images))


def embed_image(model: EmbeddingModel, image: PersonImage | np.ndarray) -> np.ndarray:
    pixels = image.pixels if isinstance(image, PersonImage) else image
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"dimension mismatch: expected H x W x 3 raster, got {pixels.shape}")
    return embed_images(model, [pixels])[0]


def rank_embeddings(query_key: str, query_embedding: np.ndarray, gallery_keys: Sequence[str],
                    gallery_embeddings: np.ndarray, k: int) -> RankList:
    """Euclidean ranking; ties go to the lexicographically smaller gallery key"""
    if len(gallery_keys) == 0:
        raise ValueError("gallery is empty")
    if k < 1:
        raise ValueError("K must be ≥1")
    distances = np.linalg.norm(np.asarray(gallery_embeddings, dtype=np.float64) - query_embedding[None, :], axis=1)
    key_rank = np.empty(len(gallery_keys), dtype=np.int64)
    key_rank[sorted(range(len(gallery_keys)), key=lambda i: gallery_keys[i])] = np.arange(len(gallery_keys))
    order = np.lexsort((key_rank, distances))[:min(k, len(gallery_keys))]
    return RankList(
        query_key=query_key,
        gallery_keys=tuple(gallery_keys[i] for i in order),
        distances=distances[order],
    )


def rank(model: EmbeddingModel, query: PersonImage | np.ndarray, gallery: Sequence[PersonImage], k: int,
         query_key: Optional[str] = None) -> RankList:
    """Top-min(K, |gallery|) gallery images by ascending embedding distance"""
    if not gallery:
        raise ValueError("gallery is empty")
    q = embed_image(model, query)
    key = query_key or (query.key if isinstance(query, PersonImage) else "query")
    g = embed_images(model, [img.pixels for img in gallery])
    return rank_embeddings(key, q, [img.key for img in gallery], g, k)


def model_to_blob(model: EmbeddingModel, seed: int) -> Dict:
    return {
        "version": BLOB_VERSION,
        "widths": list(model.widths),
        "embedding_dim": int(model.embedding_dim),
        "alpha": float(model.alpha),
        "seed": int(seed),
        "state": state_payload(model),
    }


def model_from_blob(blob: Dict) -> EmbeddingModel:
    if blob.get("version") != BLOB_VERSION:
        raise ValueError(f"unsupported model blob version {blob.get('version')}")
    model = EmbeddingModel(blob["widths"], blob["embedding_dim"], blob["alpha"])
    model.load_state_dict(blob["state"])
    model.eval()
    return model


def clone_model(model: EmbeddingModel) -> EmbeddingModel:
    return copy.deepcopy(model)
