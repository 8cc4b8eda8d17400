"""Exception types raised across the package."""


class SemiwaveError(Exception):
    """Base class for package errors."""


class DomainError(SemiwaveError, ValueError):
    """Argument outside the admissible domain (window, sign, range)."""


class ResolutionError(SemiwaveError):
    """A tabulated object is too coarse for the requested evaluation."""


class TruncationError(SemiwaveError):
    """A finite grid misses more kernel mass than allowed."""


class NotMonostableError(SemiwaveError):
    """Birth law does not have exactly the fixed points 0 and kappa."""


class NotInSpeedSetError(SemiwaveError):
    """Speed lies strictly inside the critical gap, so E_c has no real zero."""


class ScanRangeError(SemiwaveError):
    """Critical speed not found inside the widened scan bounds."""


class LevelError(SemiwaveError):
    """Requested tail level cannot be attained by the kernel."""


class ConfigError(SemiwaveError):
    """Invalid configuration (grid/time-step mismatch, bad keys, ...)."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericalError(SemiwaveError):
    """Base for failures of a numerical procedure."""


class InstabilityError(NumericalError):
    """Time integration blew up."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConvergenceError(NumericalError):
    """Iteration did not converge; the residual history is attached."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class CoverageError(SemiwaveError):
    """A time slab does not cover the delay interval."""
