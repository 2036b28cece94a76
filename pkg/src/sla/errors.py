"""Exception hierarchy shared by every module."""


class SLAError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SLAError, ValueError):
    """A configuration value or argument is out of its valid range."""


class InputError(SLAError, ValueError):
    """Input data violates a precondition (non-finite, bad normalization, ...)."""


class DegenerateInputError(InputError):
    """Input is valid data but a quantity is undefined for it (zero denominator, tied maximum)."""


class InternalError(SLAError, RuntimeError):
    """A derived quantity left its guaranteed range; signals a broken parameterization."""
