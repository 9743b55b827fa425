"""All-to-unknown backdoor laboratory for person ReID"""
from reidlab.core.service import ExperimentRunner, RunArtifacts, ablate, run_experiment
from reidlab.core.types import DatasetManifest, HashCode, PersonImage, PoisonedImage

__all__ = [
    "DatasetManifest",
    "HashCode",
    "PersonImage",
    "PoisonedImage",
    "ExperimentRunner",
    "RunArtifacts",
    "run_experiment",
    "ablate",
]
