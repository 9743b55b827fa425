"""Structured logging configuration for JSON output"""
import logging
import os
import sys
from datetime import datetime, timezone
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Optional

from pythonjsonlogger.json import JsonFormatter

from common.settings import get_settings


class JSONFormatter(JsonFormatter):
    """JSON formatter for structured logging"""

    def __init__(self) -> None:
        super().__init__(
            "%(levelname)s %(name)s %(message)s %(module)s %(funcName)s %(lineno)d",
            rename_fields={"levelname": "level", "name": "logger", "funcName": "function", "lineno": "line"},
        )

    def add_fields(self, log_record: Dict[str, Any], record: logging.LogRecord, message_dict: Dict[str, Any]) -> None:
        super().add_fields(log_record, record, message_dict)
        log_record["timestamp"] = datetime.now(timezone.utc).isoformat()

        # Flatten helper-provided context
        extra_fields = log_record.pop("extra_fields", None)
        if extra_fields:
            log_record.update(extra_fields)

        # Add Prefect context if available
        try:
            from prefect.context import get_run_context
            run_context = get_run_context()
            if run_context:
                if getattr(run_context, "flow_run", None):
                    log_record["flow_run_id"] = str(run_context.flow_run.id)
                    log_record["flow_run_name"] = run_context.flow_run.name
                if getattr(run_context, "task_run", None):
                    log_record["task_run_id"] = str(run_context.task_run.id)
                    log_record["task_run_name"] = run_context.task_run.name
        except Exception:
            pass


def is_container_env() -> bool:
    """Detect whether we run inside a container"""
    return (
        os.path.exists("/.dockerenv") or
        get_settings().container_env or
        os.getenv("PREFECT_API_URL") is not None
    )


def setup_logging(level: Optional[str] = None, log_dir: Optional[str] = None, stream_only: Optional[bool] = None):
    """
    Setup structured JSON logging

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR); defaults to LOG_LEVEL
        log_dir: Directory for the rotating log file (default: LOG_DIR, else stream only)
        stream_only: Skip the log file and log to stderr only; auto-detected in containers
    """
    settings = get_settings()
    level = (level or settings.log_level).upper()
    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level))

    # Remove existing handlers
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    formatter = JSONFormatter()

    # stderr keeps CLI results on stdout machine-readable
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setLevel(getattr(logging, level))
    stream_handler.setFormatter(formatter)
    root_logger.addHandler(stream_handler)

    stream_only = stream_only if stream_only is not None else is_container_env()
    log_dir = log_dir or settings.log_dir

    if not stream_only and log_dir:
        log_path = Path(log_dir)
        try:
            log_path.mkdir(parents=True, exist_ok=True)
        except PermissionError:
            log_path = Path("./logs")
            log_path.mkdir(parents=True, exist_ok=True)

        file_handler = RotatingFileHandler(
            log_path / "reidlab.log",
            maxBytes=10 * 1024 * 1024,  # 10MB
            backupCount=5,
            encoding="utf-8",
        )
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)
        logging.info("Logging configured: level=%s, log_dir=%s", level, log_path)
    else:
        logging.info("Logging configured: level=%s, output=stderr (JSON)", level)

    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("prefect").setLevel(getattr(logging, level))
