"""Prefect tasks wrapping the experiment service"""
import logging
import time

from prefect import task

from common.metrics import active_stages, stage_duration, stage_runs_total
from common.storage import ArtifactStore
from configs.types import ExperimentConfig
from reidlab.core.service import AblationRow, RunArtifacts, ablation_row, run_experiment

logger = logging.getLogger(__name__)


@task(name="run_experiment", log_prints=True, retries=0)
def pf_task_run_experiment(config: ExperimentConfig, artifact_root: str | None = None) -> RunArtifacts:
    """
    Prefect Task wrapping one full experiment

    Args:
        config: Validated experiment configuration
        artifact_root: Store root (default: REIDLAB_ARTIFACT_ROOT)
    """
    label = f"experiment_{config.name}"
    task_start_time = time.time()
    active_stages.labels(stage=label).inc()

    try:
        stage_runs_total.labels(stage=label, status="started").inc()
        store = ArtifactStore(artifact_root) if artifact_root else None
        artifacts = run_experiment(config, store)
        status = "success" if artifacts.ok else "invariant_failed"
        stage_runs_total.labels(stage=label, status=status).inc()
        return artifacts

    except Exception:
        stage_runs_total.labels(stage=label, status="error").inc()
        raise

    finally:
        stage_duration.labels(stage=label).observe(time.time() - task_start_time)
        active_stages.labels(stage=label).dec()


@task(name="ablation_point", log_prints=True)
def pf_task_ablation_point(value: float, config: ExperimentConfig, artifact_root: str | None = None) -> AblationRow:
    """One ablation value: a full run reduced to its (value, BA, ASR) row"""
    artifacts = pf_task_run_experiment.fn(config, artifact_root)
    return ablation_row(value, artifacts)
