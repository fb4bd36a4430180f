"""Exception hierarchy shared by all modules."""


class DDIdentError(Exception):
    """Base class for package errors."""


class InvalidParameterError(DDIdentError, ValueError):
    pass


class CoverageError(DDIdentError, ValueError):
    """Sampling grid does not cover the support an integral needs."""


class RangeError(DDIdentError, ValueError):
    pass


class UndefinedRatioError(DDIdentError, ZeroDivisionError):
    pass


class NumericalError(DDIdentError, ArithmeticError):
    """A numerical stage (SVD, underflow, degenerate pole) failed."""


class UnderflowError(NumericalError):
    pass


class InsufficientSamplesError(NumericalError):
    pass


class DegeneratePoleError(NumericalError):
    pass


class ConfigError(DDIdentError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
