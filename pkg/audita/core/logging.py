import logging
import sys
from pathlib import Path
from typing import Optional

import structlog

from audita.config import settings


class _StderrHandler(logging.StreamHandler):
    """Console handler that writes to whatever sys.stderr is at emit time"""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value) -> None:
        pass


def setup_logging(level: Optional[str] = None) -> structlog.stdlib.BoundLogger:
    """Setup application logging"""
    level_name = (level or settings.LOG_LEVEL).upper()

    shared_processors = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
    ]
    renderer = (
        structlog.processors.JSONRenderer()
        if settings.LOG_JSON
        else structlog.dev.ConsoleRenderer(colors=False)
    )

    structlog.configure(
        processors=shared_processors + [structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )

    formatter = structlog.stdlib.ProcessorFormatter(
        foreign_pre_chain=shared_processors,
        processors=[structlog.stdlib.ProcessorFormatter.remove_processors_meta, renderer],
    )

    logger = logging.getLogger("audita")
    logger.setLevel(getattr(logging, level_name))
    for handler in logger.handlers:
        handler.close()
    logger.handlers = []

    # stdout carries CSV/summary output, logs go to stderr
    console_handler = _StderrHandler()
    console_handler.setLevel(getattr(logging, level_name))
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if settings.LOG_FILE:
        Path(settings.LOG_FILE).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(settings.LOG_FILE)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return get_logger("audita")


def get_logger(name: str = "audita") -> structlog.stdlib.BoundLogger:
    """Get a logger instance"""
    return structlog.get_logger(name)
