"""Exception types raised by the lvhba package."""
from __future__ import annotations

from typing import Optional


class LVHBAError(Exception):
    """Base class for all lvhba errors."""


class PreconditionError(LVHBAError, ValueError):
    """An operation was called outside its documented domain."""


class ProjectionError(LVHBAError):
    """A projection could not be computed (rank deficiency, Dykstra stall)."""


class UnsupportedSetError(LVHBAError):
    """The requested operation has no analytic form for this set type."""


class SaddleOracleError(LVHBAError):
    """Iterated GDA did not reach the requested tolerance."""

    def __init__(self, message: str, iterations: int, last_change: float):
        super().__init__(message)
        self.iterations = iterations
        self.last_change = last_change


class ConfigError(LVHBAError, ValueError):
    """A run configuration could not be parsed or validated."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        self.bare_message = message
        super().__init__(self._format())

    def _format(self) -> str:
        if self.path and self.line:
            return f"{self.path}:{self.line}: {self.bare_message}"
        if self.path:
            return f"{self.path}: {self.bare_message}"
        return self.bare_message
