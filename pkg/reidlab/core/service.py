"""Experiment service layer: runs the pipeline stages against the artifact store"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, TypeVar

from common.errors import StageError
from common.logging_helpers import (
    log_eval_report,
    log_stage_complete,
    log_stage_error,
    log_stage_start,
)
from common.metrics import active_stages, eval_metric, get_metrics, stage_duration, stage_runs_total
from common.seeding import derive_seed, seed_everything
from common.storage import ArtifactStore, get_artifact_store
from configs.types import CODE_LENGTHS, ExperimentConfig
from reidlab.core.defenses import (
    DetectorReport,
    MIN_DETECTOR_IMAGES,
    PruneCurve,
    PruneSchedule,
    evaluate_detector,
    fine_prune,
    train_freq_detector,
)
from reidlab.core.evalharness import EvalReport, evaluate_attack
from reidlab.core.idhash import HashNetParams, train_hashnet
from reidlab.core.nets import EmbeddingModel
from reidlab.core.poisoner import (
    DistributionShift,
    PoisonedQuery,
    PoisonPolicy,
    distribution_shift,
    poison_gallery_decoys,
    poison_test_queries,
    poison_train_set,
    records_from_text,
    records_to_text,
)
from reidlab.core.reidcore import model_from_blob, model_to_blob, train_reid
from reidlab.core.reporting import distribution_text, run_summary
from reidlab.core.stegocodec import DCTSpreadSpectrumCodec, QualityGate, StegoParams
from reidlab.core.synthdata import MANIFEST_FILE, SyntheticSource, load_dataset, save_dataset
from reidlab.core.triggers import BadNetsTrigger, BlendedTrigger, ITrigger, SigTrigger, build_trigger
from reidlab.core.types import DatasetManifest, PoisonRecord, TriggerKind

logger = logging.getLogger(__name__)

STAGES = ("gen", "train-hash", "poison", "train-reid", "evaluate", "defend", "report")
CODE_TRIGGERS = (TriggerKind.DYNAMIC, TriggerKind.RANDOM_CODE)
COMPLEMENT_TOLERANCE = 1e-12

T = TypeVar("T")


@dataclass
class RunArtifacts:
    """Everything one run_experiment call produced, plus where it lives on disk"""
    name: str
    config_hash: str
    run_dir: Path
    trigger: str
    backdoor_report: EvalReport
    clean_report: EvalReport
    distribution: DistributionShift
    n_poisoned: int
    detector_report: Optional[DetectorReport] = None
    prune_curve: Optional[PruneCurve] = None
    invariant_failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.invariant_failures


class ExperimentRunner:
    """Sequential stage executor for one ExperimentConfig

    Each stage reads its upstream artifacts from the store when present, so a downstream
    stage rerun against cached artifacts matches a fresh run.
    """

    def __init__(self, config: ExperimentConfig, store: Optional[ArtifactStore] = None):
        self.config = config
        self.config_hash = config.config_hash()
        self.store = store or get_artifact_store()
        self.prefix = f"{config.name}/{self.config_hash}"
        self.stego = StegoParams.from_config(config.stego, config.hashnet.code_length)
        self.codec = DCTSpreadSpectrumCodec(self.stego, QualityGate.from_config(config.stego))
        self.trigger_kind = TriggerKind(config.poison.trigger)

    # ---------- plumbing ----------

    def object_name(self, name: str) -> str:
        return f"{self.prefix}/{name}"

    @property
    def run_dir(self) -> Path:
        return self.store.path(self.prefix)

    def seed(self, stage: str) -> int:
        return derive_seed(self.config.seed, stage)

    def run_stage(self, stage: str, fn: Callable[[], T], cached: bool = False) -> T:
        """Run one stage with metrics and structured logs; failures surface as StageError"""
        start = time.time()
        active_stages.labels(stage=stage).inc()
        log_stage_start(logger, stage, self.config_hash, experiment=self.config.name)
        try:
            stage_runs_total.labels(stage=stage, status="started").inc()
            result = fn()
            stage_runs_total.labels(stage=stage, status="success").inc()
            log_stage_complete(logger, stage, self.config_hash, time.time() - start, cached=cached)
            return result
        except Exception as e:
            stage_runs_total.labels(stage=stage, status="error").inc()
            log_stage_error(logger, stage, self.config_hash, e)
            if isinstance(e, StageError):
                raise
            raise StageError(stage, e) from e
        finally:
            stage_duration.labels(stage=stage).observe(time.time() - start)
            active_stages.labels(stage=stage).dec()

    def _dataset_cached(self, name: str) -> bool:
        return self.store.object_exists(self.object_name(f"{name}/{MANIFEST_FILE}"))

    # ---------- stages ----------

    def generate(self) -> DatasetManifest:
        cached = self._dataset_cached("dataset")

        def stage() -> DatasetManifest:
            directory = self.store.path(self.object_name("dataset"))
            if cached:
                return load_dataset(directory, self.config_hash)
            manifest = SyntheticSource(self.config.dataset, self.seed("gen")).load()
            save_dataset(manifest, directory, self.config_hash)
            return manifest

        return self.run_stage("gen", stage, cached)

    def train_hash(self, manifest: DatasetManifest) -> Optional[HashNetParams]:
        """Only dynamic triggers need the identity hash network"""
        if self.trigger_kind != TriggerKind.DYNAMIC:
            return None
        name = self.object_name("hashnet.pt")
        cached = self.store.object_exists(name)

        def stage() -> HashNetParams:
            if cached:
                return HashNetParams.from_blob(self.store.get_blob(name, self.config_hash))
            seed = self.seed("train-hash")
            seed_everything(seed)
            params = train_hashnet(manifest, self.config.hashnet, seed)
            self.store.put_blob(name, params.to_blob(), self.config_hash)
            return params

        return self.run_stage("train-hash", stage, cached)

    def build_trigger(self, hashnet: Optional[HashNetParams]) -> ITrigger:
        return build_trigger(self.config.poison, self.codec, hashnet, seed=self.seed("random-code"))

    def poison(self, manifest: DatasetManifest, trigger: ITrigger) -> tuple[DatasetManifest, List[PoisonRecord]]:
        records_name = self.object_name("poison_records.tsv")
        cached = self._dataset_cached("poisoned") and self.store.object_exists(records_name)

        def stage():
            directory = self.store.path(self.object_name("poisoned"))
            if cached:
                records = records_from_text(self.store.get_text(records_name, self.config_hash))
                return load_dataset(directory, self.config_hash), records
            policy = PoisonPolicy.from_config(self.config.poison)
            poisoned, records = poison_train_set(manifest, policy, trigger, self.seed("poison"))
            save_dataset(poisoned, directory, self.config_hash)
            self.store.put_text(records_name, records_to_text(records), self.config_hash)
            return poisoned, records

        return self.run_stage("poison", stage, cached)

    def _train_or_load(self, name: str, manifest: DatasetManifest, model_name: str) -> EmbeddingModel:
        object_name = self.object_name(name)
        if self.store.object_exists(object_name):
            return model_from_blob(self.store.get_blob(object_name, self.config_hash))
        seed = self.seed("train-reid")
        seed_everything(seed)
        model = train_reid(manifest, self.config.reid, seed, model_name=model_name)
        self.store.put_blob(object_name, model_to_blob(model, seed), self.config_hash)
        return model

    def train_reid(self, clean: DatasetManifest, poisoned: DatasetManifest) -> tuple[EmbeddingModel, EmbeddingModel]:
        """Clean and backdoored models share one seed, so a zero poison rate yields identical models"""
        cached = all(self.store.object_exists(self.object_name(n)) for n in ("reid_clean.pt", "reid_backdoor.pt"))

        def stage():
            f = self._train_or_load("reid_clean.pt", clean, "reid_clean")
            f_prime = self._train_or_load("reid_backdoor.pt", poisoned, "reid_backdoor")
            return f, f_prime

        return self.run_stage("train-reid", stage, cached)

    def poison_queries(self, manifest: DatasetManifest, trigger: ITrigger) -> List[PoisonedQuery]:
        return poison_test_queries(manifest, trigger, self.seed("poison-queries"))

    def evaluate(self, manifest: DatasetManifest, poisoned_manifest: DatasetManifest, trigger: ITrigger,
                 f: EmbeddingModel, f_prime: EmbeddingModel) -> tuple[EvalReport, EvalReport, DistributionShift,
                                                                       List[PoisonedQuery]]:
        def stage():
            queries = self.poison_queries(manifest, trigger)
            poisoned_images = [q.image for q in queries]
            decoys = None
            if self.trigger_kind in CODE_TRIGGERS:
                decoys = poison_gallery_decoys(manifest, queries, trigger, self.seed("decoys"))
            shift = distribution_shift(manifest, poisoned_manifest)
            train_ids = manifest.train_ids()
            reports = []
            for run_name, model in ((f"{self.config.name}/backdoor", f_prime), (f"{self.config.name}/clean", f)):
                report = evaluate_attack(
                    run_name,
                    self.trigger_kind.value,
                    model,
                    manifest.query,
                    poisoned_images,
                    manifest.gallery,
                    self.config.eval,
                    train_ids,
                    targeted_applicable=self.trigger_kind in CODE_TRIGGERS,
                    decoys=decoys,
                    distribution_l1=shift.l1,
                )
                reports.append(report)
            backdoor, clean = reports
            for name, value in backdoor.metrics().items():
                if isinstance(value, (int, float)) and math.isfinite(value):
                    eval_metric.labels(metric=name).set(value)
            log_eval_report(logger, backdoor.run_name, backdoor.metrics())
            self.store.put_text(self.object_name("eval_backdoor.txt"), backdoor.to_text(), self.config_hash)
            self.store.put_text(self.object_name("eval_clean.txt"), clean.to_text(), self.config_hash)
            self.store.put_text(self.object_name("eval_backdoor.json"), backdoor.to_json(), self.config_hash)
            self.store.put_text(self.object_name("distribution.csv"), distribution_text(shift), self.config_hash)
            return backdoor, clean, shift, queries

        return self.run_stage("evaluate", stage)

    def defend(self, manifest: DatasetManifest, queries: Sequence[PoisonedQuery],
               f_prime: EmbeddingModel) -> tuple[Optional[DetectorReport], Optional[PruneCurve]]:
        if not self.config.defense.enabled:
            return None, None

        def stage():
            seed = self.seed("defend")
            detector_report = self._run_detector(manifest, queries, seed)
            schedule = PruneSchedule(tuple(self.config.defense.prune_fractions), self.config.defense.finetune_epochs)
            seed_everything(seed)
            curve = fine_prune(
                f_prime,
                [img for img in manifest.train if not img.poisoned],
                schedule,
                [q.image for q in queries],
                manifest.query,
                manifest.gallery,
                self.config.eval,
                self.config.reid,
                seed,
                targeted=self.trigger_kind in CODE_TRIGGERS,
            )
            self.store.put_text(self.object_name("prune_curve.csv"), curve.to_text(), self.config_hash)
            return detector_report, curve

        return self.run_stage("defend", stage)

    def _run_detector(self, manifest: DatasetManifest, queries: Sequence[PoisonedQuery],
                      seed: int) -> Optional[DetectorReport]:
        clean_pixels = [img.pixels for img in manifest.train if not img.poisoned]
        if len(clean_pixels) < MIN_DETECTOR_IMAGES:
            logger.warning(
                f"Skipping frequency detector: {len(clean_pixels)} clean training images, "
                f"need {MIN_DETECTOR_IMAGES}",
                extra={"extra_fields": {"n_clean": len(clean_pixels)}},
            )
            return None
        detector = train_freq_detector(clean_pixels, seed, fpr=self.config.defense.detector_fpr)
        test_clean = manifest.query
        baseline_cfg = self.config.poison.baseline
        families: Dict[str, List] = {self.trigger_kind.value: [q.image.pixels for q in queries]}
        for trigger in (BadNetsTrigger(baseline_cfg), BlendedTrigger(baseline_cfg), SigTrigger(baseline_cfg)):
            families.setdefault(trigger.kind.value, [trigger.poison(img, img.gt_id).pixels for img in test_clean])
        report = evaluate_detector(detector, [img.pixels for img in test_clean], families)
        self.store.put_text(self.object_name("detector.txt"), report.to_text(), self.config_hash)
        return report

    def check_invariants(self, backdoor: EvalReport, clean: EvalReport) -> List[str]:
        failures = []
        for report in (backdoor, clean):
            total = report.asr_nontargeted + report.positive_retrieval_rate
            if abs(total - 1.0) > COMPLEMENT_TOLERANCE:
                failures.append(f"{report.run_name}: non-targeted ASR + positive retrieval = {total!r}")
        if self.trigger_kind in CODE_TRIGGERS and backdoor.unseen_target_fraction != 1.0:
            failures.append(f"unseen target fraction {backdoor.unseen_target_fraction} != 1")
        if self.config.poison.rate == 0 and backdoor.metrics() != clean.metrics():
            failures.append("zero-rate backdoored metrics differ from clean metrics")
        return failures

    def write_report(self, artifacts: RunArtifacts) -> Path:
        def stage() -> Path:
            self.store.put_bytes(self.object_name("metrics.prom"), get_metrics())
            return self.store.put_text(self.object_name("report.txt"), run_summary(artifacts), self.config_hash)

        return self.run_stage("report", stage)

    def run(self) -> RunArtifacts:
        manifest = self.generate()
        hashnet = self.train_hash(manifest)
        trigger = self.build_trigger(hashnet)
        poisoned, records = self.poison(manifest, trigger)
        f, f_prime = self.train_reid(manifest, poisoned)
        backdoor, clean, shift, queries = self.evaluate(manifest, poisoned, trigger, f, f_prime)
        detector_report, curve = self.defend(manifest, queries, f_prime)

        artifacts = RunArtifacts(
            name=self.config.name,
            config_hash=self.config_hash,
            run_dir=self.run_dir,
            trigger=self.trigger_kind.value,
            backdoor_report=backdoor,
            clean_report=clean,
            distribution=shift,
            n_poisoned=len(records),
            detector_report=detector_report,
            prune_curve=curve,
            invariant_failures=self.check_invariants(backdoor, clean),
        )
        for failure in artifacts.invariant_failures:
            logger.error(f"Invariant failed: {failure}", extra={"extra_fields": {"config_hash": self.config_hash}})
        self.write_report(artifacts)
        return artifacts


def run_experiment(config: ExperimentConfig, store: Optional[ArtifactStore] = None) -> RunArtifacts:
    """Execute every stage for one config; a repeated call reproduces the reports byte for byte"""
    return ExperimentRunner(config, store).run()


AblationAxis = Literal["poison_rate", "code_length"]


@dataclass(frozen=True)
class AblationRow:
    value: float
    ba: float
    asr: float
    name: str


@dataclass
class AblationTable:
    axis: str
    rows: List[AblationRow]

    def to_text(self) -> str:
        lines = [f"{self.axis},ba,asr"]
        lines += [f"{row.value:g},{row.ba:.6f},{row.asr:.6f}" for row in self.rows]
        return "\n".join(lines) + "\n"

    def best(self) -> AblationRow:
        return max(self.rows, key=lambda row: (row.asr, -row.value))


def ablation_configs(config: ExperimentConfig, axis: str, values: Sequence[float]) -> List[ExperimentConfig]:
    """One config per axis value, everything else held constant

    Raises:
        ValueError: unknown axis, empty values, or a value outside the axis's valid set
    """
    if not values:
        raise ValueError("ablation needs at least one value")
    configs = []
    for value in values:
        data = config.model_dump()
        if axis == "poison_rate":
            if not 0 <= value <= 1:
                raise ValueError(f"poison_rate value {value} outside [0, 1]")
            data["poison"]["rate"] = float(value)
        elif axis == "code_length":
            if value not in CODE_LENGTHS:
                raise ValueError(f"code_length value {value} not in {CODE_LENGTHS}")
            data["hashnet"]["code_length"] = int(value)
        else:
            raise ValueError(f"Unknown ablation axis '{axis}'")
        data["name"] = f"{config.name}_{axis}_{value:g}".replace(".", "_")
        configs.append(ExperimentConfig.model_validate(data))
    return configs


def ablation_row(value: float, artifacts: RunArtifacts) -> AblationRow:
    report = artifacts.backdoor_report
    asr = report.asr_targeted if report.asr_targeted is not None else report.asr_nontargeted
    return AblationRow(value=float(value), ba=report.ba, asr=asr, name=artifacts.name)


def ablate(config: ExperimentConfig, axis: str, values: Sequence[float],
           store: Optional[ArtifactStore] = None) -> AblationTable:
    """Sequential ablation; the Prefect flow runs the same configs concurrently"""
    configs = ablation_configs(config, axis, values)
    rows = [ablation_row(value, run_experiment(cfg, store)) for value, cfg in zip(values, configs)]
    table = AblationTable(axis=axis, rows=rows)
    (store or get_artifact_store()).put_text(
        f"{config.name}/ablation_{axis}.csv", table.to_text(), config.config_hash()
    )
    return table

