"""Torch building blocks: conv extractor, GeM pooling, embedding model, triplet (+ identity) training"""
import logging
import math
from typing import Callable, List, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from common.errors import TrainingDivergedError
from common.logging_helpers import log_training_complete, log_training_epoch
from common.seeding import torch_seeded
from common.metrics import training_loss

logger = logging.getLogger(__name__)


class ConvExtractor(nn.Module):
    """Stride-2 conv stages with ReLU; bias-free so a zero image maps to a zero map"""

    def __init__(self, widths: Sequence[int], in_channels: int = 3):
        super().__init__()
        layers: List[nn.Module] = []
        prev = in_channels
        for width in widths:
            layers.append(nn.Conv2d(prev, width, kernel_size=3, stride=2, padding=1, bias=False))
            layers.append(nn.ReLU())
            prev = width
        self.body = nn.Sequential(*layers)
        self.out_channels = prev

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class GeM(nn.Module):
    """Generalized-mean pooling with a fixed exponent"""

    def __init__(self, alpha: float = 3.0, eps: float = 1e-6):
        super().__init__()
        self.alpha = alpha
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x.clamp(min=self.eps).pow(self.alpha).mean(dim=(-2, -1)).pow(1.0 / self.alpha)


class EmbeddingModel(nn.Module):
    """Extractor -> GeM -> linear head -> unit-norm embedding

    dim_mask zeroes embedding dimensions before normalisation (fine-pruning).
    """

    def __init__(self, widths: Sequence[int], embedding_dim: int, alpha: float):
        super().__init__()
        self.widths = tuple(widths)
        self.embedding_dim = embedding_dim
        self.alpha = alpha
        self.extractor = ConvExtractor(widths)
        self.pool = GeM(alpha)
        self.head = nn.Linear(self.extractor.out_channels, embedding_dim)
        self.register_buffer("dim_mask", torch.ones(embedding_dim))

    def raw(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.pool(self.extractor(x))) * self.dim_mask

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.raw(x), dim=1)


def to_tensor(pixels: Sequence[np.ndarray] | np.ndarray) -> torch.Tensor:
    """Stack H x W x 3 rasters into an N x 3 x H x W float32 batch"""
    batch = np.stack([np.asarray(p, dtype=np.float32) for p in pixels]) if not isinstance(pixels, np.ndarray) \
        else np.asarray(pixels, dtype=np.float32)
    if batch.ndim == 3:
        batch = batch[None]
    if not np.all(np.isfinite(batch)):
        raise ValueError("non-finite pixels")
    return torch.from_numpy(np.ascontiguousarray(batch.transpose(0, 3, 1, 2)))


def batch_hard_triplet_loss(embeddings: torch.Tensor, labels: torch.Tensor, margin: float) -> Tuple[torch.Tensor, float]:
    """Batch-hard triplet loss; returns (loss, fraction of anchors with a positive hinge)"""
    sq = (embeddings ** 2).sum(dim=1)
    dist = (sq[:, None] + sq[None, :] - 2.0 * embeddings @ embeddings.T).clamp(min=1e-12).sqrt()
    same = labels[:, None] == labels[None, :]
    eye = torch.eye(len(labels), dtype=torch.bool)
    pos_mask = same & ~eye
    neg_mask = ~same
    valid = pos_mask.any(dim=1) & neg_mask.any(dim=1)
    if not bool(valid.any()):
        return embeddings.sum() * 0.0, 0.0
    hardest_pos = (dist * pos_mask).max(dim=1).values
    hardest_neg = dist.masked_fill(~neg_mask, float("inf")).min(dim=1).values
    hinge = F.relu(hardest_pos - hardest_neg + margin)[valid]
    return hinge.mean(), float((hinge > 0).float().mean())


def pk_batches(labels: np.ndarray, ids_per_batch: int, imgs_per_id: int, rng: np.random.Generator) -> List[np.ndarray]:
    """One epoch of P x K index batches, about len(labels) / (P * K) of them

    Identities with at least two images are visited in shuffled rounds, so every one of
    them appears at least once per epoch.
    """
    unique, counts = np.unique(labels, return_counts=True)
    usable = unique[counts >= 2]
    if len(usable) < 2:
        return []
    per_batch = min(ids_per_batch, len(usable))
    n_batches = max(math.ceil(len(labels) / (per_batch * imgs_per_id)), math.ceil(len(usable) / per_batch))
    members = {ident: np.flatnonzero(labels == ident) for ident in usable}
    queue: List[int] = []
    batches = []
    for _ in range(n_batches):
        while len(queue) < per_batch:
            queue.extend([i for i in rng.permutation(usable) if i not in queue])
        chunk, queue = queue[:per_batch], queue[per_batch:]
        idx = []
        for ident in chunk:
            pool = members[ident]
            idx.extend(rng.choice(pool, size=imgs_per_id, replace=len(pool) < imgs_per_id))
        batches.append(np.asarray(idx))
    return batches


def check_trainable(labels: Sequence[int], what: str) -> None:
    unique, counts = np.unique(np.asarray(labels), return_counts=True)
    if int(np.sum(counts >= 2)) < 2:
        raise ValueError(f"{what} needs ≥2 identities with ≥2 images each")


class CosineClassifier(nn.Module):
    """Scaled cosine logits over the training identities; lives only during training"""

    def __init__(self, embedding_dim: int, n_classes: int, scale: float = 16.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(n_classes, embedding_dim) * 0.01)
        self.scale = scale

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        return self.scale * F.normalize(embeddings, dim=1) @ F.normalize(self.weight, dim=1).T


def fit_triplet(model: nn.Module,
                embed: Callable[[torch.Tensor], torch.Tensor],
                pixels: np.ndarray,
                labels: np.ndarray,
                *,
                epochs: int,
                ids_per_batch: int,
                imgs_per_id: int,
                lr: float,
                margin: float,
                optimizer: str,
                seed: int,
                model_name: str,
                id_loss_weight: float = 0.0,
                label_smoothing: float = 0.1) -> List[float]:
    """Seeded PK-sampled batch-hard triplet training; returns the per-epoch mean losses

    With id_loss_weight > 0 a label-smoothed identity cross-entropy over a cosine classifier
    is added to the triplet term.
    """
    if epochs == 0:
        return []
    rng = np.random.default_rng(seed)
    classes, class_index = np.unique(labels, return_inverse=True)
    params = [p for p in model.parameters() if p.requires_grad]
    classifier = None
    if id_loss_weight > 0:
        with torch.no_grad():
            dim = int(embed(to_tensor(pixels[:1])).shape[1])
        with torch_seeded(seed):
            classifier = CosineClassifier(dim, len(classes))
        params += list(classifier.parameters())
    if optimizer == "adam":
        opt = torch.optim.Adam(params, lr=lr)
    else:
        opt = torch.optim.SGD(params, lr=lr, momentum=0.9)

    images = to_tensor(pixels)
    label_tensor = torch.as_tensor(labels, dtype=torch.long)
    class_tensor = torch.as_tensor(class_index, dtype=torch.long)
    losses: List[float] = []
    step = 0
    model.train()
    for epoch in range(epochs):
        epoch_losses, epoch_active = [], []
        for batch in pk_batches(labels, ids_per_batch, imgs_per_id, rng):
            index = torch.from_numpy(batch)
            embeddings = embed(images[index])
            loss, active = batch_hard_triplet_loss(embeddings, label_tensor[index], margin)
            if classifier is not None:
                loss = loss + id_loss_weight * F.cross_entropy(
                    classifier(embeddings), class_tensor[index], label_smoothing=label_smoothing)
            step += 1
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingDivergedError(model_name, step, value)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(value)
            epoch_active.append(active)
        mean_loss = float(np.mean(epoch_losses)) if epoch_losses else 0.0
        losses.append(mean_loss)
        training_loss.labels(model=model_name).set(mean_loss)
        log_training_epoch(logger, model_name, epoch, mean_loss,
                           float(np.mean(epoch_active)) if epoch_active else 0.0)
    model.eval()
    log_training_complete(logger, model_name, epochs, step, losses[-1] if losses else None)
    return losses


def infer(fn: Callable[[torch.Tensor], torch.Tensor], pixels: Sequence[np.ndarray] | np.ndarray,
          batch_size: int = 1) -> np.ndarray:
    """Run fn over rasters without gradients; returns float64 numpy

    The default of one image per call keeps every output independent of batch composition.
    """
    batch = to_tensor(pixels)
    outputs: List[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, batch.shape[0], batch_size):
            outputs.append(fn(batch[start:start + batch_size]).double().numpy())
    return np.concatenate(outputs, axis=0)


def state_payload(module: nn.Module) -> dict:
    return {k: v.detach().clone() for k, v in module.state_dict().items()}
