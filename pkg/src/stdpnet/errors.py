"""Exception types shared across the package.

Each carries an ``exit_code`` so the CLI can map failures onto its
documented process exit codes without a lookup table.
"""


class StdpnetError(Exception):
    exit_code = 1


class InvalidInputError(StdpnetError, ValueError):
    """Input data violates a documented precondition."""

    exit_code = 3


class ConfigError(StdpnetError):
    """Configuration is missing, malformed, or inconsistent with an artifact."""

    exit_code = 2


class DataError(StdpnetError):
    """A dataset or artifact on disk could not be read or is malformed."""

    exit_code = 3


class NonConvergenceError(StdpnetError):
    """Training hit its epoch cap before every prototype reached its spike target."""

    exit_code = 4

    def __init__(self, message, spike_counts=None):
        super().__init__(message)
        self.spike_counts = list(spike_counts) if spike_counts is not None else []
