"""Exception hierarchy shared by all modules."""


class LoyLabError(Exception):
    """Base class for all package errors."""


class ModelError(LoyLabError, ValueError):
    """Invalid model, grid, partition or operator input."""


class NumericalError(LoyLabError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class NonDiagonalizableError(NumericalError):
    """Matrix has no well-conditioned eigenbasis."""


class ConfigError(LoyLabError):
    """Malformed run configuration."""
