"""Exception types shared across the package."""


class WallbenchError(Exception):
    """Base class for all package errors."""


class DomainError(WallbenchError, ValueError):
    """An input lies outside the domain of a physical or numerical formula."""


class ValidationError(WallbenchError, ValueError):
    """A data structure, file or specification violates its schema."""


class SubmissionError(ValidationError):
    """A challenge submission does not match the test split."""


class NumericalError(WallbenchError, ArithmeticError):
    """A numerical kernel could not produce a trustworthy result."""


class TrainingError(NumericalError):
    """Training diverged (non-finite loss)."""


class ConfigError(WallbenchError, ValueError):
    """A run configuration is malformed or incomplete."""
