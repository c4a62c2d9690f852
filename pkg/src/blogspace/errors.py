"""Exception types raised by the analysis modules."""

from __future__ import annotations


class BlogspaceError(Exception):
    """Base class; the CLI maps these to exit status 1."""


class LogFormatError(BlogspaceError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LogValidationError(BlogspaceError):
    """Raised by strict parsing when the validation report is not clean."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"invalid event log: {report.summary()}")


class EmptyDataError(BlogspaceError):
    pass


class FitError(BlogspaceError):
    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)


class ConvergenceError(BlogspaceError):
    def __init__(self, message: str, residuals=None):
        self.residuals = residuals
        super().__init__(message)
