"""Exception taxonomy shared by the library and the CLI exit codes."""


class VoxdiffError(Exception):
    """Base class for all package errors."""


class ConfigError(VoxdiffError):
    """Invalid configuration, parameters, or argument domains. CLI exit code 2."""


class FormatError(VoxdiffError):
    """Malformed or inconsistent on-disk data. CLI exit code 3."""


class NumericError(VoxdiffError):
    """Numerical failure (underflow, non-finite values). CLI exit code 4."""
