"""
Structured logging configuration
Provides JSON logging for pipeline stages, data-quality warnings and errors
"""
import logging
import logging.config
import json
import os
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Dict, Any, Iterator, Optional


_EXTRA_FIELDS = (
    "stage",
    "user_id",
    "error_code",
    "category",
    "severity",
    "details",
    "count",
    "path",
    "performance_metrics",
)


class JSONFormatter(logging.Formatter):
    """JSON formatter for structured logging"""

    def format(self, record):
        log_entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno
        }

        for field in _EXTRA_FIELDS:
            if hasattr(record, field):
                log_entry[field] = getattr(record, field)

        if record.exc_info:
            log_entry["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_entry, default=str)


def build_logging_config(
    level: str = "INFO",
    fmt: str = "json",
    log_dir: Optional[str] = None
) -> Dict[str, Any]:
    """Logging configuration; console goes to stderr so stdout carries command output"""
    handlers: Dict[str, Any] = {
        "console": {
            "level": level,
            "class": "logging.StreamHandler",
            "formatter": fmt,
            "stream": "ext://sys.stderr"
        }
    }
    if log_dir:
        handlers["file"] = {
            "level": "DEBUG",
            "class": "logging.handlers.RotatingFileHandler",
            "formatter": "json",
            "filename": os.path.join(log_dir, "pipeline.log"),
            "maxBytes": 10485760,  # 10MB
            "backupCount": 5
        }
        handlers["error_file"] = {
            "level": "ERROR",
            "class": "logging.handlers.RotatingFileHandler",
            "formatter": "json",
            "filename": os.path.join(log_dir, "errors.log"),
            "maxBytes": 10485760,  # 10MB
            "backupCount": 10
        }

    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "json": {
                "()": JSONFormatter,
            },
            "standard": {
                "format": "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
            }
        },
        "handlers": handlers,
        "loggers": {
            "tripchain": {
                "level": level,
                "handlers": list(handlers),
                "propagate": False
            },
            "uvicorn": {
                "level": "INFO",
                "handlers": ["console"],
                "propagate": False
            }
        },
        "root": {
            "level": "WARNING",
            "handlers": ["console"]
        }
    }


class PipelineLogger:
    """Logger for stage timings and row counts"""

    def __init__(self):
        self.logger = logging.getLogger("tripchain.pipeline")

    def log_stage(self, stage: str, duration: float, counts: Dict[str, int]):
        """Log a completed pipeline stage"""
        self.logger.info(
            f"Stage completed: {stage}",
            extra={
                "stage": stage,
                "performance_metrics": {
                    "duration_ms": round(duration * 1000, 2),
                    **counts
                }
            }
        )

    @contextmanager
    def timed_stage(self, stage: str, counts: Optional[Dict[str, int]] = None) -> Iterator[Dict[str, int]]:
        """Time a block; the yielded dict collects counts reported on exit"""
        collected: Dict[str, int] = dict(counts or {})
        start_time = time.perf_counter()
        yield collected
        self.log_stage(stage, time.perf_counter() - start_time, collected)


def setup_logging(level: str = "INFO", fmt: str = "json", log_dir: Optional[str] = None) -> logging.Logger:
    """Setup logging configuration"""
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
    logging.config.dictConfig(build_logging_config(level.upper(), fmt, log_dir))
    logger = logging.getLogger("tripchain")
    logger.debug("Logging system initialized")
    return logger


pipeline_logger = PipelineLogger()
