"""
Logging setup shared by the CLI and the self-check suite.

Records carry optional context through ``extra=``: ``frame`` (timestep),
``stage`` (pipeline stage) and ``scenario`` (self-check name).  The JSON
formatter lifts them into the emitted object; the text formatter ignores
them.
"""

import json
import logging
import sys
from typing import IO, Optional, Union

from vital_occ_stream.core.exceptions import ConfigurationError

LOG_FORMATS = ("text", "json")
CONTEXT_FIELDS = ("frame", "stage", "scenario")
DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class JSONFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "timestamp": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for name in CONTEXT_FIELDS:
            value = getattr(record, name, None)
            if value is not None:
                entry[name] = value
        if record.exc_info and record.exc_info[0] is not None:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str)


def parse_level(level: Union[str, int, None]) -> int:
    """Level name (any case) or number; ``None`` means INFO."""
    if level is None:
        return logging.INFO
    if isinstance(level, int):
        return level
    value = logging.getLevelName(level.strip().upper())
    if not isinstance(value, int):
        raise ConfigurationError(f"unknown log level {level!r}", field="log_level")
    return value


def setup_logging(
    level: Union[str, int, None] = None,
    format_string: Optional[str] = None,
    log_format: str = "text",
    force_reconfigure: bool = False,
    stream: Optional[IO[str]] = None,
) -> None:
    """
    Install one handler on the root logger.

    Args:
        level: Level name or number; defaults to INFO
        format_string: Format for text records
        log_format: "text" or "json"
        force_reconfigure: Replace existing handlers instead of only updating levels
        stream: Target stream, stderr by default
    """
    numeric_level = parse_level(level)
    log_format = log_format.lower()
    if log_format not in LOG_FORMATS:
        raise ConfigurationError(f"unknown log format {log_format!r}", field="log_format")

    root_logger = logging.getLogger()
    if root_logger.handlers and not force_reconfigure:
        root_logger.setLevel(numeric_level)
        for handler in root_logger.handlers:
            handler.setLevel(numeric_level)
        return
    root_logger.handlers.clear()

    # Reports go to stdout; keep log records on stderr
    handler = logging.StreamHandler(stream if stream is not None else sys.stderr)
    handler.setLevel(numeric_level)
    if log_format == "json":
        handler.setFormatter(JSONFormatter())
    else:
        handler.setFormatter(logging.Formatter(format_string or DEFAULT_FORMAT))
    root_logger.addHandler(handler)
    root_logger.setLevel(numeric_level)

    # numpy RuntimeWarnings (overflow in exp, invalid casts) become log records
    logging.captureWarnings(True)
