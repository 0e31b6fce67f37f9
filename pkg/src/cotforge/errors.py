"""Shared exception types.

ConfigError covers bad construction parameters and malformed config files,
FormatError covers malformed token streams / text records, BackendError
wraps failures of pluggable generation backends.
"""


class ConfigError(ValueError):
    """Invalid configuration value."""


class FormatError(ValueError):
    """Malformed sequence, record, or message structure."""


class BackendError(RuntimeError):
    """A generation backend failed to produce a response."""
