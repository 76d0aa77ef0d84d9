"""
Exception hierarchy for hazardset.
Every error raised on purpose by a service carries the CLI exit code it maps to.
"""


class HazardSetError(Exception):
    """Base class for expected, user-facing failures."""

    exit_code = 1

    def __init__(self, message: str, context: str = None):
        super().__init__(message)
        self.context = context

    def __str__(self):
        message = super().__str__()
        if self.context:
            return f"[{self.context}] {message}"
        return message


class ConfigError(HazardSetError, ValueError):
    """Invalid run configuration or command-line usage."""

    exit_code = 2


class DataError(HazardSetError, ValueError):
    """Input data that cannot support the requested analysis."""

    exit_code = 3


class NumericalError(HazardSetError, ArithmeticError):
    """An estimator or optimizer failed to produce a valid result."""

    exit_code = 4
