"""Experiment prefect flows"""
import logging
import os
from typing import List, Optional

from prefect import flow, tags
from prefect.task_runners import ThreadPoolTaskRunner

from .experiment_tasks import pf_task_ablation_point, pf_task_run_experiment
from common.storage import ArtifactStore, get_artifact_store
from configs.types import ExperimentConfig
from reidlab.core.service import AblationTable, ablation_configs

# 初始化日志（输出到 stderr；容器环境中不写日志文件）
from common.logging_config import setup_logging
setup_logging(level=os.getenv("LOG_LEVEL", "INFO"))

logger = logging.getLogger(__name__)

MAX_ABLATION_WORKERS = 4


@flow(name="run_experiment", log_prints=True)
def pf_flow_run_experiment(config: ExperimentConfig, artifact_root: Optional[str] = None) -> str:
    """
    Run every stage of one experiment

    Returns:
        Run directory of the artifacts
    """
    with tags("experiment", config.name):
        logger.info(f"Starting experiment flow: {config.name}")
        artifacts = pf_task_run_experiment(config, artifact_root)
        if not artifacts.ok:
            raise RuntimeError(f"Invariants failed for {config.name}: {'; '.join(artifacts.invariant_failures)}")
        return str(artifacts.run_dir)


@flow(name="ablate", log_prints=True, task_runner=ThreadPoolTaskRunner(max_workers=MAX_ABLATION_WORKERS))
def pf_flow_ablate(config: ExperimentConfig, axis: str, values: List[float],
                   artifact_root: Optional[str] = None) -> str:
    """
    Ablation runs are independent, so they are submitted concurrently

    Returns:
        The (value, BA, ASR) table as CSV text
    """
    with tags("ablation", config.name, axis):
        configs = ablation_configs(config, axis, values)
        futures = [pf_task_ablation_point.submit(v, cfg, artifact_root) for v, cfg in zip(values, configs)]
        table = AblationTable(axis=axis, rows=[future.result() for future in futures])
        store = ArtifactStore(artifact_root) if artifact_root else get_artifact_store()
        store.put_text(f"{config.name}/ablation_{axis}.csv", table.to_text(), config.config_hash())
        logger.info(f"Ablation over {axis} finished with {len(table.rows)} runs")
        return table.to_text()
