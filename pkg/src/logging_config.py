"""
RMT Lab Structured Logging Configuration

JSON or human-readable log lines on standard error, each tagged with the
experiment (config hash), ensemble and trial that produced it. Standard
output is left to the data the CLI prints.
"""

from __future__ import annotations

import json
import logging
import sys
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from functools import wraps
from typing import Any, TypeVar

F = TypeVar("F", bound=Callable[..., Any])

# Libraries whose INFO chatter drowns trial logs
NOISY_LOGGERS = ("joblib",)


@dataclass(frozen=True)
class RunContext:
    """Where a log line comes from inside a Monte Carlo run."""

    experiment_id: str = ""
    ensemble: str = ""
    trial: int | None = None

    def fields(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.experiment_id:
            out["experiment_id"] = self.experiment_id
        if self.ensemble:
            out["ensemble"] = self.ensemble
        if self.trial is not None:
            out["trial"] = self.trial
        return out

    def tag(self) -> str:
        parts = []
        if self.experiment_id:
            parts.append(f"exp={self.experiment_id[:8]}")
        if self.ensemble:
            parts.append(f"ens={self.ensemble}")
        if self.trial is not None:
            parts.append(f"trial={self.trial}")
        return f" [{', '.join(parts)}]" if parts else ""


_run_context: ContextVar[RunContext] = ContextVar("run_context", default=RunContext())


def current_context() -> RunContext:
    return _run_context.get()


class StructuredFormatter(logging.Formatter):
    """
    One JSON object per line:

        {"timestamp": "...Z", "level": "INFO", "logger": "src.harness",
         "message": "Trial failed", "experiment_id": "3f2a9c0e1b7d4a55",
         "ensemble": "rademacher", "trial": 17, "location": "harness:execute_trial:196",
         "extra": {"error": "..."}}
    """

    def format(self, record: logging.LogRecord) -> str:
        entry: dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            **current_context().fields(),
            "location": f"{record.module}:{record.funcName}:{record.lineno}",
        }
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        if getattr(record, "extra_fields", None):
            entry["extra"] = record.extra_fields
        return json.dumps(entry, default=str)


class PrettyFormatter(logging.Formatter):
    """
    Console lines such as

        14:30:00 | WARNING  | harness:execute_trial | Trial failed [exp=3f2a9c0e, ens=rademacher, trial=17]
    """

    COLORS = {
        "DEBUG": "\033[36m",
        "INFO": "\033[32m",
        "WARNING": "\033[33m",
        "ERROR": "\033[31m",
        "CRITICAL": "\033[35m",
    }
    RESET = "\033[0m"

    def __init__(self, color: bool = True) -> None:
        super().__init__()
        self.color = color

    def format(self, record: logging.LogRecord) -> str:
        clock = datetime.fromtimestamp(record.created).strftime("%H:%M:%S")
        level = f"{record.levelname:8}"
        if self.color and record.levelname in self.COLORS:
            level = f"{self.COLORS[record.levelname]}{level}{self.RESET}"

        line = (
            f"{clock} | {level} | {record.module}:{record.funcName:24} | "
            f"{record.getMessage()}{current_context().tag()}"
        )
        if getattr(record, "extra_fields", None):
            line += f" {record.extra_fields}"
        if record.exc_info:
            line += "\n" + self.formatException(record.exc_info)
        return line


class ContextualLogger(logging.LoggerAdapter):
    """
    Adapter accepting `extra_fields=` on every call:

        logger.info("Trial finished", extra_fields={"sigma_min_sq": 14.1})
    """

    def process(self, msg: Any, kwargs: Any) -> tuple[Any, Any]:
        extra = dict(kwargs.get("extra") or {})
        extra_fields = kwargs.pop("extra_fields", None)
        if extra_fields:
            extra["extra_fields"] = extra_fields
        kwargs["extra"] = extra
        return msg, kwargs


def get_logger(name: str) -> ContextualLogger:
    return ContextualLogger(logging.getLogger(name), {})


def setup_logging(level: str = "INFO", json_output: bool = False, log_file: str | None = None) -> None:
    """
    Configure the root logger; safe to call repeatedly.

    Args:
        level: DEBUG, INFO, WARNING, ERROR or CRITICAL
        json_output: JSON lines on stderr instead of the console format
        log_file: optional extra destination, always JSON
    """
    root = logging.getLogger()
    root.setLevel(getattr(logging, level.upper()))
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(StructuredFormatter() if json_output else PrettyFormatter(color=sys.stderr.isatty()))
    root.addHandler(console)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(StructuredFormatter())
        root.addHandler(file_handler)

    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


# ============================================================================
# Run context
# ============================================================================

def set_experiment_context(experiment_id: str) -> None:
    """Tag subsequent lines with a config hash; clears any trial tag."""
    _run_context.set(RunContext(experiment_id=experiment_id))


def clear_context() -> None:
    _run_context.set(RunContext())


@contextmanager
def trial_context(ensemble: str, trial: int, experiment_id: str | None = None) -> Iterator[RunContext]:
    """
    Scope an ensemble and trial tag to a block, restoring the outer context.

    Worker processes start without the parent's context, so callers pass the
    config hash along.
    """
    context = replace(current_context(), ensemble=ensemble, trial=trial)
    if experiment_id is not None:
        context = replace(context, experiment_id=experiment_id)
    token = _run_context.set(context)
    try:
        yield current_context()
    finally:
        _run_context.reset(token)


# ============================================================================
# Timing
# ============================================================================

def log_execution_time(logger: ContextualLogger | None = None) -> Callable[[F], F]:
    """Log wall time of the wrapped call at INFO, or at ERROR when it raises."""

    def decorator(func: F) -> F:
        log = logger or get_logger(func.__module__)

        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            start = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                log.error(
                    f"{func.__name__} failed",
                    extra_fields={"seconds": round(time.perf_counter() - start, 3), "error": type(e).__name__},
                )
                raise
            log.info(f"{func.__name__} finished", extra_fields={"seconds": round(time.perf_counter() - start, 3)})
            return result

        return wrapper  # type: ignore[return-value]

    return decorator
