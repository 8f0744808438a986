"""Exception types shared across the package."""


class MksError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MksError):
    """Invalid static setup: grid sizes, cutoff levels, kernel parameters."""


class UsageError(MksError):
    """A value was passed in the wrong state (representation, grid, time grid)."""


class NumericalError(MksError):
    """A numerical routine failed to converge or produced non-finite values."""


class BlowUpError(NumericalError):
    """Trajectory norm exceeded the blow-up threshold.

    Carries the time stamp and the offending norm so the harness can log
    the event and keep partial outputs.
    """

    def __init__(self, message, time, norm):
        super().__init__(message)
        self.time = time
        self.norm = norm


class ValidationError(ConfigurationError):
    """Config validation failure; ``violations`` lists tagged messages."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)
