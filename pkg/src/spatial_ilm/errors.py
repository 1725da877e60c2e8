"""Exception hierarchy shared by the library and the command-line driver."""


class ILMError(Exception):
    """Base class for all errors raised by spatial_ilm."""


class InputError(ILMError, ValueError):
    """Invalid user-supplied values (coordinates, times, parameters)."""


class EvaluationError(ILMError, ArithmeticError):
    """A model quantity cannot be evaluated, e.g. a power-law kernel at zero distance."""


class ContractError(ILMError):
    """A function was called in a state its contract does not cover."""


class InitializationError(ILMError):
    """No starting point with finite log-posterior could be found."""


class ConfigError(ILMError):
    """Malformed or inconsistent run configuration."""


class DataError(ILMError):
    """Missing or unreadable data files."""
