"""Exception hierarchy. Each class carries the CLI exit code for its error class."""


class VrdError(Exception):
    exit_code = 1


class ModelError(VrdError):
    """Invalid RDT model or model file."""

    exit_code = 3


class ReplayExhausted(ModelError):
    pass


class DeviceStateError(VrdError):
    """Device oracle used out of order (e.g. hammer before any draw)."""

    exit_code = 3


class ConfigError(VrdError):
    exit_code = 3


class NoBitflipError(VrdError):
    """No measurement in a bootstrap/guess run produced a bitflip."""

    exit_code = 4


class VictimNotFound(VrdError):
    exit_code = 4


class AnalysisError(VrdError):
    """Series unusable for the requested statistic."""

    exit_code = 5


class IntegrityError(VrdError):
    """Persisted artifact missing, corrupt, or failing its manifest hash."""

    exit_code = 6


class SeedCollision(VrdError):
    exit_code = 7
