"""Exception taxonomy shared by all modules.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericFaultError -> 4, NonConvergenceError -> 5.
"""


class SdfForgeError(Exception):
    """Base class for all library errors."""


class ConfigError(SdfForgeError):
    """Bad configuration: unknown key, invalid value, unsupported mode."""


class DataError(SdfForgeError):
    """Bad input data: degenerate geometry, empty sets, malformed files."""


class NumericFaultError(SdfForgeError):
    """Non-finite value encountered where finiteness is a contract."""


class NonConvergenceError(SdfForgeError):
    """An iterative procedure failed to make progress and aborted."""


class DegenerateNeighborhoodError(DataError):
    """Point neighborhood has no well-defined normal direction."""


class DegenerateSceneError(DataError):
    """Scene has zero spatial extent and cannot be normalized."""


class UnsupportedActivationError(ConfigError):
    """Second derivatives requested from a non-smooth activation."""


class PreconditionError(DataError):
    """An operation's documented precondition was violated."""


class UndefinedMetricError(DataError):
    """Metric requested on inputs for which it is undefined (empty sets)."""
