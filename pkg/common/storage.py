"""Flat-file artifact store with config-hash stamping"""
import io
import logging
import os
import shutil
from pathlib import Path
from typing import Any, Dict, List, Optional

import torch

from common.errors import ConfigHashMismatchError
from common.logging_helpers import log_artifact_loaded, log_artifact_saved
from common.settings import get_settings

logger = logging.getLogger(__name__)

STAMP_PREFIX = "# config_hash="


class ArtifactStore:
    """Flat-file storage for run artifacts (manifests, models, reports)"""

    def __init__(self, root: Optional[str | Path] = None):
        """Initialize the store

        Args:
            root: Directory holding the artifacts (default: REIDLAB_ARTIFACT_ROOT)
        """
        self.root = Path(root or get_settings().artifact_root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, object_name: str) -> Path:
        """Resolve an object name inside the store"""
        return self.root / object_name

    def put_bytes(self, object_name: str, data: bytes) -> Path:
        """Write raw bytes atomically"""
        target = self.path(object_name)
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_suffix(target.suffix + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, target)
        return target

    def get_bytes(self, object_name: str) -> bytes:
        """Read raw bytes"""
        target = self.path(object_name)
        if not target.exists():
            raise FileNotFoundError(f"Artifact not found: {target}")
        return target.read_bytes()

    def put_text(self, object_name: str, text: str, config_hash: str) -> Path:
        """Write a UTF-8 text artifact whose first line carries the config hash"""
        body = f"{STAMP_PREFIX}{config_hash}\n{text}"
        target = self.put_bytes(object_name, body.encode("utf-8"))
        log_artifact_saved(logger, object_name, str(target), config_hash)
        return target

    def get_text(self, object_name: str, config_hash: Optional[str]) -> str:
        """Read a stamped text artifact; a stamp mismatch is a hard error"""
        raw = self.get_bytes(object_name).decode("utf-8")
        first, _, body = raw.partition("\n")
        if not first.startswith(STAMP_PREFIX):
            raise ConfigHashMismatchError(f"Artifact {object_name} carries no config hash stamp")
        stamped = first[len(STAMP_PREFIX):].strip()
        if config_hash is not None and stamped != config_hash:
            raise ConfigHashMismatchError(
                f"Artifact {object_name} was produced by config {stamped}, expected {config_hash}"
            )
        log_artifact_loaded(logger, object_name, str(self.path(object_name)), stamped)
        return body

    def put_blob(self, object_name: str, payload: Dict[str, Any], config_hash: str) -> Path:
        """Serialize a dict of tensors/primitives with torch.save, stamped with the config hash"""
        buffer = io.BytesIO()
        torch.save({**payload, "config_hash": config_hash}, buffer)
        target = self.put_bytes(object_name, buffer.getvalue())
        log_artifact_saved(logger, object_name, str(target), config_hash)
        return target

    def get_blob(self, object_name: str, config_hash: Optional[str]) -> Dict[str, Any]:
        """Load a stamped blob"""
        payload = torch.load(io.BytesIO(self.get_bytes(object_name)), weights_only=True)
        stamped = payload.get("config_hash")
        if config_hash is not None and stamped != config_hash:
            raise ConfigHashMismatchError(
                f"Artifact {object_name} was produced by config {stamped}, expected {config_hash}"
            )
        log_artifact_loaded(logger, object_name, str(self.path(object_name)), str(stamped))
        return payload

    def object_exists(self, object_name: str) -> bool:
        """Check if an object exists"""
        return self.path(object_name).exists()

    def list_objects(self, prefix: Optional[str] = None) -> List[str]:
        """List all objects under an optional prefix"""
        base = self.path(prefix) if prefix else self.root
        if not base.exists():
            return []
        return sorted(
            str(p.relative_to(self.root)) for p in base.rglob("*") if p.is_file()
        )

    def delete(self, object_name: str) -> None:
        """Delete an object or a directory of objects"""
        target = self.path(object_name)
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        logger.info(f"Deleted artifact {object_name}")


# Singleton Instance
_artifact_store: Optional[ArtifactStore] = None


def get_artifact_store() -> ArtifactStore:
    """Access singleton artifact store rooted at REIDLAB_ARTIFACT_ROOT"""
    global _artifact_store
    if _artifact_store is None:
        _artifact_store = ArtifactStore()
    return _artifact_store
