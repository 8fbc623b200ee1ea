"""Exception hierarchy shared across the package."""


class DelayStackError(Exception):
    """Base class for all package errors."""


class ContractViolation(DelayStackError, ValueError):
    """A documented precondition of an operation was not met."""


class HistoryRangeError(ContractViolation):
    """A history was queried outside its stored window."""


class ExplicitnessError(ContractViolation):
    """A callback asked for x2 data that is not yet known at this step."""


class ConfigurationError(ContractViolation):
    """Invalid grids, options or parameters."""


class HypothesisViolation(DelayStackError):
    """A standing structural hypothesis on the system fails on a grid."""


class SpecViolation(DelayStackError):
    """A certificate specification contradicts its own declared properties."""


class EvaluationError(DelayStackError):
    """A user-supplied function failed or returned a non-finite value."""

    def __init__(self, message: str, t: float | None = None):
        self.t = t
        super().__init__(message if t is None else f"{message} (at t={t!r})")


class InversionError(DelayStackError):
    """Numeric inversion of a comparison function failed."""
