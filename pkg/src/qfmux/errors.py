"""Exception hierarchy shared by all qfmux modules."""


class QFError(Exception):
    """Base class for every error raised by qfmux."""


class DomainError(QFError, ValueError):
    """An argument lies outside the domain of a rate-utility model."""


class UtilityRangeError(QFError, ValueError):
    """A utility value cannot be reached by a rate-utility model."""


class FitError(QFError):
    pass


class AllocationError(QFError):
    """Rate allocation cannot satisfy the floor and sum constraints."""


class InfeasibleError(QFError):
    """No equilibrium exists (or none could be bracketed numerically)."""


class NumericError(QFError):
    """An iterative numerical routine failed to converge.

    ``partial`` holds whatever the routine had computed when it gave up.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ModelAssemblyError(QFError):
    pass


class TuningError(QFError):
    """Gain search finished without a candidate stable on every realization."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(QFError):
    pass


class SimulationError(QFError):
    """A run aborted; ``slot`` is the slot index where it happened."""

    def __init__(self, message, slot=None):
        super().__init__(message if slot is None else f"slot {slot}: {message}")
        self.slot = slot
