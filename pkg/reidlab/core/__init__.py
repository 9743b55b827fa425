"""Core lab modules"""
from reidlab.core.types import (
    DatasetManifest,
    HashCode,
    PersonImage,
    PoisonedImage,
    PoisonRecord,
    RankList,
)
from reidlab.core.synthdata import IDatasetSource, SyntheticSource, DirectorySource
from reidlab.core.idhash import HashNetParams
from reidlab.core.stegocodec import ICodec, DCTSpreadSpectrumCodec, StegoParams
from reidlab.core.triggers import ITrigger
from reidlab.core.poisoner import PoisonPolicy
from reidlab.core.evalharness import EvalReport
from reidlab.core.defenses import FreqDetector, PruneSchedule
from reidlab.core.service import ExperimentRunner, RunArtifacts

__all__ = [
    "DatasetManifest",
    "HashCode",
    "PersonImage",
    "PoisonedImage",
    "PoisonRecord",
    "RankList",
    "IDatasetSource",
    "SyntheticSource",
    "DirectorySource",
    "HashNetParams",
    "ICodec",
    "DCTSpreadSpectrumCodec",
    "StegoParams",
    "ITrigger",
    "PoisonPolicy",
    "EvalReport",
    "FreqDetector",
    "PruneSchedule",
    "ExperimentRunner",
    "RunArtifacts",
]
