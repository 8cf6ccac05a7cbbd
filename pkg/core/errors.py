"""
Exception hierarchy shared by every softflip module.
"""

from typing import Optional


class SoftflipError(Exception):
    """Base class for softflip errors."""


class IRParseError(SoftflipError):
    """Raised when IR text cannot be parsed or fails validation."""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class ConfigurationError(SoftflipError):
    """Bad campaign input: selectors, budgets, models, plans, benchmarks."""


class PairingError(ConfigurationError):
    """Two campaign reports cannot be compared trial by trial."""


class BenchmarkDefectError(SoftflipError):
    """A benchmark did not halt cleanly in its fault-free run."""

    def __init__(self, benchmark: str, termination: str, cause: Optional[str] = None):
        self.benchmark = benchmark
        self.termination = termination
        self.cause = cause
        detail = f"{termination}({cause})" if cause else termination
        super().__init__(f"benchmark '{benchmark}' is defective: golden run {detail}")


class InvalidTrialError(SoftflipError):
    """The targeted dynamic instance was never reached."""


class ReportIOError(SoftflipError):
    """Reading or writing a report file failed."""

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"{path}: {reason}")
