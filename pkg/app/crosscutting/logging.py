import logging
import sys
from typing import Any, Dict, Optional

import structlog

PACKAGE_LOGGER = "app"

_SHARED_PROCESSORS = [
    structlog.contextvars.merge_contextvars,
    structlog.stdlib.add_log_level,
    structlog.stdlib.add_logger_name,
    structlog.processors.TimeStamper(fmt="iso", utc=True),
]


def _configure_structlog() -> None:
    """Route structlog through stdlib logging so handlers decide where records go."""
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            *_SHARED_PROCESSORS,
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )


_configure_structlog()


class CorrelationContext:
    """Binds correlation fields (run id, config hash, stage, span) for nested scopes.

    Only non-None fields are bound; previous values are restored on exit.
    """

    def __init__(self, run_id: Optional[str] = None,
                 config_hash: Optional[str] = None,
                 stage: Optional[str] = None,
                 span: Optional[int] = None):
        fields = {"run_id": run_id, "config_hash": config_hash, "stage": stage, "span": span}
        self.fields = {key: value for key, value in fields.items() if value is not None}
        self._previous: Dict[str, Any] = {}

    def __enter__(self):
        current = structlog.contextvars.get_contextvars()
        self._previous = {key: current[key] for key in self.fields if key in current}
        structlog.contextvars.bind_contextvars(**self.fields)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        structlog.contextvars.unbind_contextvars(*self.fields)
        if self._previous:
            structlog.contextvars.bind_contextvars(**self._previous)


def setup_logging(level: str = "INFO",
                  log_file: Optional[str] = None,
                  json_output: bool = True) -> logging.Logger:
    """Install stderr (and optional file) handlers on the package logger.

    Calling it again replaces the handlers instead of stacking them.
    """
    _configure_structlog()
    renderer = (structlog.processors.JSONRenderer(sort_keys=True) if json_output
                else structlog.dev.ConsoleRenderer(colors=False))
    formatter = structlog.stdlib.ProcessorFormatter(
        processor=renderer,
        foreign_pre_chain=_SHARED_PROCESSORS,
    )

    logger = logging.getLogger(PACKAGE_LOGGER)
    try:
        logger.setLevel(getattr(logging, level.upper()))
    except AttributeError:
        raise ValueError(f"unknown log level: {level}")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = False

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str = PACKAGE_LOGGER):
    return structlog.get_logger(name)


def log_with_fields(logger, level: str, message: str,
                    fields: Optional[Dict[str, Any]] = None, **kwargs) -> None:
    """Log an event with extra key/value fields."""
    payload = dict(fields or {})
    payload.update(kwargs)
    getattr(logger, level.lower())(message, **payload)


def log_stage_start(logger, stage: str, **kwargs) -> None:
    with CorrelationContext(stage=stage):
        log_with_fields(logger, "INFO", "stage_started", **kwargs)


def log_stage_complete(logger, stage: str, duration_ms: float, **kwargs) -> None:
    with CorrelationContext(stage=stage):
        log_with_fields(logger, "INFO", "stage_completed", duration_ms=round(duration_ms, 3), **kwargs)


def log_error(logger, message: str, error: Exception, **kwargs) -> None:
    """Log an error with its type, message and traceback."""
    log_with_fields(logger, "ERROR", message,
                    error_type=type(error).__name__,
                    error_message=str(error),
                    exc_info=error,
                    **kwargs)
