"""Prefect flows and tasks"""
from flows.experiment_flows import pf_flow_ablate, pf_flow_run_experiment
from flows.experiment_tasks import pf_task_ablation_point, pf_task_run_experiment

__all__ = [
    "pf_flow_run_experiment",
    "pf_flow_ablate",
    "pf_task_run_experiment",
    "pf_task_ablation_point",
]
