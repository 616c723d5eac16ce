"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1, data
problems exit 2, numerical failures exit 3.
"""


class ConfigurationError(Exception):
    """Invalid or inconsistent configuration."""


class DataError(Exception):
    """Missing, malformed, or mismatched data inputs."""


class RenderError(DataError):
    """The renderer cannot produce an image for the given inputs."""


class NumericsError(Exception):
    """A computation produced non-finite values."""
