from __future__ import annotations

import functools
import json
import logging
import logging.handlers
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, MutableMapping, Optional, Tuple, Union

"""
lcvn/monitoring/logging.py

Run logging for the CLI phases and the planner service: console output plus
the run's ``logs/run.log``, with run_id, phase and step carried as record extras.
"""

LOG_MAX_BYTES = 10 * 1024 * 1024  # 10 MiB
LOG_BACKUP_COUNT = 3
CONTEXT_KEYS = ("run_id", "phase", "split", "step")

_STANDARD_ATTRS = frozenset(
    vars(logging.LogRecord("", logging.INFO, "", 0, "", (), None)).keys()
) | {"message", "asctime"}


class JSONFormatter(logging.Formatter):
    """One JSON object per record; non-standard attributes go under ``extra``."""

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(timespec="seconds"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "lineno": record.lineno,
        }
        if record.exc_info:
            payload["exc_info"] = "".join(traceback.format_exception(*record.exc_info))

        extras: Dict[str, Any] = {}
        for key, value in record.__dict__.items():
            if key in _STANDARD_ATTRS:
                continue
            try:
                json.dumps(value)
                extras[key] = value
            except (TypeError, ValueError):
                extras[key] = repr(value)
        if extras:
            payload["extra"] = extras
        return json.dumps(payload, ensure_ascii=False)


class ConsoleFormatter(logging.Formatter):
    """``time level logger: message [run_id=.. phase=.. step=..]``"""

    def __init__(self) -> None:
        super().__init__(fmt="%(asctime)s %(levelname)s %(name)s: %(message)s", datefmt="%Y-%m-%d %H:%M:%S")

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        context = [f"{k}={getattr(record, k)}" for k in CONTEXT_KEYS if hasattr(record, k)]
        return f"{line} [{' '.join(context)}]" if context else line


def _resolve_level(level: Union[str, int]) -> int:
    if isinstance(level, int):
        return level
    resolved = logging.getLevelName(str(level).upper())
    return resolved if isinstance(resolved, int) else logging.INFO


def configure_logging(
    level: Union[str, int] = "INFO",
    log_file: Optional[str] = None,
    json_format: bool = False,
    root_logger_name: str = "",
) -> None:
    """
    Replace the handlers of ``root_logger_name`` with a stdout handler and,
    when ``log_file`` is given, a rotating file handler.
    """
    resolved_level = _resolve_level(level)
    logger = logging.getLogger(root_logger_name)
    logger.handlers.clear()
    logger.setLevel(resolved_level)

    formatter: logging.Formatter = JSONFormatter() if json_format else ConsoleFormatter()
    handlers: List[logging.Handler] = [logging.StreamHandler(stream=sys.stdout)]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(
            logging.handlers.RotatingFileHandler(
                filename=log_file, maxBytes=LOG_MAX_BYTES, backupCount=LOG_BACKUP_COUNT, encoding="utf-8"
            )
        )
    for handler in handlers:
        handler.setFormatter(formatter)
        handler.setLevel(resolved_level)
        logger.addHandler(handler)


class StructuredLoggerAdapter(logging.LoggerAdapter):
    """LoggerAdapter that merges its context into the ``extra`` of every call."""

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> Tuple[Any, MutableMapping[str, Any]]:
        kwargs["extra"] = {**self.extra, **kwargs.get("extra", {})}
        return msg, kwargs

    def bind(self, **context: Any) -> "StructuredLoggerAdapter":
        return StructuredLoggerAdapter(self.logger, {**self.extra, **context})


def add_structured_context(logger: logging.Logger, **context: Any) -> StructuredLoggerAdapter:
    """
    Example:
        log = add_structured_context(logging.getLogger("lcvn.pipeline"), run_id=cfg.run_id)
        log.bind(phase="wm").info("step done", extra={"step": 10, "loss": 0.3})
    """
    return StructuredLoggerAdapter(logger, context)


def log_exceptions(logger: logging.Logger) -> Callable:
    """Decorator: log unhandled exceptions of a command at ERROR level and re-raise."""

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any):
            try:
                return func(*args, **kwargs)
            except Exception:
                logger.exception("Unhandled exception in %s", func.__qualname__)
                raise

        return wrapper

    return decorator
