"""Exception hierarchy for the lab"""
from typing import Optional


class ReidLabError(Exception):
    """Base class for all lab errors"""


class ManifestError(ReidLabError, ValueError):
    """Dataset manifest violates one of its invariants"""


class CapacityError(ReidLabError, ValueError):
    """Payload does not fit into the carrier image"""


class EmbeddingError(ReidLabError, RuntimeError):
    """Codec round-trip could not be established for an image"""


class ConfigHashMismatchError(ReidLabError, ValueError):
    """Artifact was produced by a different configuration"""


class TrainingDivergedError(ReidLabError, RuntimeError):
    """Loss became non-finite during training"""

    def __init__(self, model: str, step: int, loss: float):
        self.model = model
        self.step = step
        self.loss = loss
        super().__init__(f"{model} training diverged at step {step} (loss={loss})")


class StageError(ReidLabError, RuntimeError):
    """A pipeline stage failed; upstream artifacts are left in place"""

    def __init__(self, stage: str, cause: Optional[BaseException] = None):
        self.stage = stage
        self.cause = cause
        detail = f": {type(cause).__name__}: {cause}" if cause else ""
        super().__init__(f"Stage '{stage}' failed{detail}")
