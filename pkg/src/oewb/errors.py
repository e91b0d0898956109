"""Exception types shared across the package.

Everything user-facing derives from ValidationError so the CLI can map
rejected inputs and configs to exit code 1 while genuine crashes keep
exit code 2.
"""


class ValidationError(Exception):
    """Base class for every rejected-input condition."""


class ConfigurationError(ValidationError):
    """Inconsistent shapes, settings, or missing required pieces."""


class ParameterError(ValidationError):
    """A numeric argument outside its legal range."""


class DataError(ValidationError):
    """Malformed or out-of-range dataset contents."""


class InputError(ValidationError):
    """Runtime inputs that cannot be processed (empty pools, bad sizes)."""
