"""Exception hierarchy shared across the package.

Each class carries a distinct process exit code so the CLI can map
failures onto categorized statuses.
"""


class PlasmaviewError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(PlasmaviewError):
    """Invalid configuration value or malformed config file."""

    exit_code = 2


class MissingInputError(PlasmaviewError):
    """A required input file, directory, or record is absent."""

    exit_code = 3


class SchemaError(PlasmaviewError):
    """On-disk data does not match the expected schema or shape."""

    exit_code = 4


class NumericError(PlasmaviewError):
    """Non-finite values or numerically undefined operations."""

    exit_code = 5
