"""Exception types shared across the package."""


class PosengError(Exception):
    """Base class for all errors raised by poseng."""


class ConfigurationError(PosengError, ValueError):
    """Inputs are structurally incompatible (shapes, labels, counts)."""


class DomainError(PosengError, ValueError):
    """An argument lies outside the domain of the operation."""


class ValidationError(PosengError, ValueError):
    """A position map is not strictly increasing and non-negative."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class ContextOverflowError(PosengError):
    """Edited positions would run past the model's context window."""
