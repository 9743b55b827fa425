"""Master-seed fan-out and RNG setup"""
import hashlib
import threading
from contextlib import contextmanager
from typing import Iterator

import numpy as np
import torch

from common.settings import get_settings


def derive_seed(master_seed: int, stage: str) -> int:
    """Derive a per-stage seed by hashing the stage label into the master seed"""
    digest = hashlib.sha256(f"{master_seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**31)


_TORCH_SEED_LOCK = threading.Lock()


@contextmanager
def torch_seeded(seed: int) -> Iterator[None]:
    """Hold the process-wide torch RNG while a seeded module is constructed (ablations share threads)"""
    with _TORCH_SEED_LOCK:
        torch.manual_seed(seed)
        yield


def seed_everything(seed: int) -> None:
    """Seed numpy's legacy stream and torch, and pin torch to deterministic single-stream kernels"""
    np.random.seed(seed)
    with torch_seeded(seed):
        torch.set_num_threads(get_settings().torch_threads)
        torch.use_deterministic_algorithms(True, warn_only=True)
