"""Logging setup for the command line.

Records carry the ids of the active OpenTelemetry span, so log lines written
during a training stage can be matched with its ``stage.*`` span. Log output
goes to stderr; stdout is reserved for command results.
"""

import logging
import sys
from typing import Optional, Union

from opentelemetry.trace import get_current_span

LOG_FORMAT = (
    "%(asctime)s - %(name)s - %(levelname)s - %(message)s "
    "[service=%(service_name)s trace_id=%(trace_id)s span_id=%(span_id)s]"
)
NOISY_LOGGERS = ("opentelemetry", "joblib")

_LOGGING_CONFIGURED = False


class TraceContextFilter(logging.Filter):
    """Attach the service name and trace/span ids ("-" outside a span) to every record."""

    def __init__(self, service_name: str = "-") -> None:
        super().__init__()
        self.service_name = service_name

    def filter(self, record: logging.LogRecord) -> bool:
        record.service_name = self.service_name
        record.trace_id = "-"
        record.span_id = "-"
        try:
            span_context = get_current_span().get_span_context()
        except Exception:
            return True
        if span_context and span_context.is_valid:
            record.trace_id = format(span_context.trace_id, "032x")
            record.span_id = format(span_context.span_id, "016x")
        return True


def resolve_level(level: Union[int, str]) -> int:
    """Numeric level for an int or a name such as ``"debug"``; unknown names give INFO."""
    if isinstance(level, int):
        return level
    value = logging.getLevelName(level.strip().upper())
    return value if isinstance(value, int) else logging.INFO


def _handler(handler: logging.Handler, level: int, service_name: str) -> logging.Handler:
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.addFilter(TraceContextFilter(service_name))
    return handler


def setup_logging(
    name: str = "crsom",
    level: Union[int, str] = logging.INFO,
    log_file: Optional[str] = None,
    service_name: Optional[str] = None,
) -> logging.Logger:
    """Install the stderr (and optional file) handlers once; later calls only adjust levels.

    Records are stamped with ``service_name`` (default: ``name``).
    """
    global _LOGGING_CONFIGURED

    numeric = resolve_level(level)
    logger = logging.getLogger(name)
    logger.setLevel(numeric)
    root_logger = logging.getLogger()
    root_logger.setLevel(numeric)

    if _LOGGING_CONFIGURED:
        return logger

    service = service_name or name
    root_logger.addHandler(_handler(logging.StreamHandler(sys.stderr), numeric, service))
    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        root_logger.addHandler(_handler(file_handler, numeric, service))
    for noisy in NOISY_LOGGERS:
        logging.getLogger(noisy).setLevel(max(numeric, logging.WARNING))

    _LOGGING_CONFIGURED = True
    return logger
