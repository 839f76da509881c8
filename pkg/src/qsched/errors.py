"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, parameters, or config file contents."""


class TraceError(ValueError):
    """Base class for workload trace file problems."""


class TraceFormatError(TraceError):
    """The trace file is not in the expected CSV format."""


class TraceValidationError(TraceError):
    """A trace row failed validation; the message names the line."""
