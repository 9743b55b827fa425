"""Logging helper functions for structured logging with context"""
import logging
from typing import Any, Dict, Optional


def log_stage_start(logger: logging.Logger, stage: str, config_hash: str, **context: Any):
    """Log pipeline stage start with context"""
    logger.info(
        f"Starting stage {stage}",
        extra={
            "extra_fields": {
                "stage": stage,
                "config_hash": config_hash,
                **context,
            }
        }
    )


def log_stage_complete(logger: logging.Logger, stage: str, config_hash: str, duration: float, cached: bool = False):
    """Log pipeline stage completion with context"""
    logger.info(
        f"Completed stage {stage} in {duration:.2f}s" + (" (cached)" if cached else ""),
        extra={
            "extra_fields": {
                "stage": stage,
                "config_hash": config_hash,
                "duration_seconds": round(duration, 3),
                "cached": cached,
            }
        }
    )


def log_stage_error(logger: logging.Logger, stage: str, config_hash: str, error: Exception):
    """Log pipeline stage error with context"""
    logger.error(
        f"Error in stage {stage}: {error}",
        exc_info=True,
        extra={
            "extra_fields": {
                "stage": stage,
                "config_hash": config_hash,
                "error_type": type(error).__name__,
            }
        }
    )


def log_training_epoch(logger: logging.Logger, model: str, epoch: int, loss: float, active_triplets: float):
    """Log a finished training epoch"""
    logger.debug(
        f"{model} epoch {epoch}: loss={loss:.5f}",
        extra={
            "extra_fields": {
                "model": model,
                "epoch": epoch,
                "loss": loss,
                "active_triplets": active_triplets,
            }
        }
    )


def log_training_complete(logger: logging.Logger, model: str, epochs: int, steps: int, final_loss: Optional[float]):
    """Log training completion"""
    logger.info(
        f"Trained {model}: {epochs} epochs, {steps} steps",
        extra={
            "extra_fields": {
                "model": model,
                "epochs": epochs,
                "steps": steps,
                "final_loss": final_loss,
            }
        }
    )


def log_poison_summary(logger: logging.Logger, trigger: str, pairing: str, n_source: int, n_poisoned: int, rate: float):
    """Log a finished poisoning plan"""
    logger.info(
        f"Poisoned {n_poisoned}/{n_source} training images with {trigger} triggers",
        extra={
            "extra_fields": {
                "trigger": trigger,
                "pairing": pairing,
                "n_source": n_source,
                "n_poisoned": n_poisoned,
                "rate": rate,
            }
        }
    )


def log_embed_refined(logger: logging.Logger, passes: int, weak_bits: int):
    """Log when embedding needed extra passes to survive clamping/quantization"""
    logger.debug(
        f"Embedding converged after {passes} passes",
        extra={
            "extra_fields": {
                "passes": passes,
                "weak_bits": weak_bits,
            }
        }
    )


def log_eval_report(logger: logging.Logger, run_name: str, metrics: Dict[str, Any]):
    """Log evaluation summary"""
    logger.info(
        f"Evaluation for {run_name}: " + ", ".join(f"{k}={v}" for k, v in metrics.items()),
        extra={
            "extra_fields": {
                "run_name": run_name,
                **metrics,
            }
        }
    )


def log_detector_calibrated(logger: logging.Logger, threshold: float, fpr: float, n_train: int, holdout_accuracy: float):
    """Log frequency detector calibration"""
    logger.info(
        f"Frequency detector calibrated: threshold={threshold:.4f} at fpr={fpr}",
        extra={
            "extra_fields": {
                "threshold": threshold,
                "fpr": fpr,
                "n_train": n_train,
                "holdout_accuracy": holdout_accuracy,
            }
        }
    )


def log_prune_step(logger: logging.Logger, fraction: float, pruned_dims: int, ba: float, asr: Optional[float]):
    """Log one prune-finetune-test step"""
    logger.info(
        f"Pruned {pruned_dims} dims (fraction={fraction}): BA={ba:.4f} ASR={asr}",
        extra={
            "extra_fields": {
                "fraction": fraction,
                "pruned_dims": pruned_dims,
                "ba": ba,
                "asr": asr,
            }
        }
    )


def log_artifact_saved(logger: logging.Logger, name: str, path: str, config_hash: str):
    """Log artifact persistence"""
    logger.debug(
        f"Saved artifact {name} to {path}",
        extra={
            "extra_fields": {
                "artifact": name,
                "path": path,
                "config_hash": config_hash,
            }
        }
    )


def log_artifact_loaded(logger: logging.Logger, name: str, path: str, config_hash: str):
    """Log cached artifact reuse"""
    logger.debug(
        f"Loaded artifact {name} from {path}",
        extra={
            "extra_fields": {
                "artifact": name,
                "path": path,
                "config_hash": config_hash,
            }
        }
    )
