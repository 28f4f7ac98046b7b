"""
Exception classes for the occupancy stream engine.

Every error raised by the library derives from :class:`OccStreamError` and
carries the process exit code the CLI reports for it.
"""

from typing import Any, Dict, Optional


class OccStreamError(Exception):
    """Base exception for all engine errors."""

    exit_code: int = 3

    def __init__(
        self,
        message: str,
        exit_code: Optional[int] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        if exit_code is not None:
            self.exit_code = exit_code
        self.details = details or {}


class InputError(OccStreamError):
    """Raised for missing or malformed input files and scene configs."""

    exit_code = 1

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        field: Optional[str] = None,
    ):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(
            f"{location}{message}",
            details={"path": path, "line": line, "field": field},
        )
        self.path = path
        self.line = line
        self.field = field


class ConfigurationError(OccStreamError):
    """Raised for invalid run configuration or missing parameter blocks."""

    exit_code = 2

    def __init__(self, message: str, block: Optional[str] = None, field: Optional[str] = None):
        super().__init__(message, details={"block": block, "field": field})
        self.block = block
        self.field = field


class ContractViolation(OccStreamError):
    """Raised when an operation's pre- or post-condition does not hold."""

    exit_code = 3
