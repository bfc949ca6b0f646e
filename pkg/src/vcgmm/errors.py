"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its preconditions."""


class ConfigError(ValueError):
    """Invalid or mutually incompatible configuration values."""


class DataFormatError(ValueError):
    """A dataset file could not be parsed into a valid data matrix."""


class NumericalAbort(ArithmeticError):
    """The optimization produced a non-finite objective."""
