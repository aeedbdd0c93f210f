"""Exception hierarchy shared by every module."""


class AlignError(Exception):
    """Base class for library errors."""


class ValidationError(AlignError, ValueError):
    """Input failed a probability or structural check."""


class DimensionError(AlignError, ValueError):
    """Array shapes do not agree."""


class DomainError(AlignError, ValueError):
    """Argument lies outside the domain where the quantity is defined."""


class ConvergenceError(AlignError, RuntimeError):
    """An iterative method hit its iteration cap."""


class NumericalError(AlignError, RuntimeError):
    """A linear-algebra routine failed."""


class PreconditionError(AlignError):
    """A documented precondition (e.g. friendliness) does not hold."""


class RecoveryError(AlignError):
    """A recovered permutation failed its verification pass."""


class ThresholdMismatchError(AlignError):
    """Source and empirical threshold sets have different sizes."""


class GenerationError(AlignError):
    """Random instance generation exhausted its retry budget."""

    def __init__(self, message: str, best_alpha: float, best_beta: float):
        super().__init__(message)
        self.best_alpha = best_alpha
        self.best_beta = best_beta


class ConfigError(AlignError):
    """Experiment configuration is malformed."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
