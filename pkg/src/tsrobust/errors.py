"""Exception hierarchy shared across the toolkit.

Each class maps to one CLI exit code, see cli.EXIT_CODES.
"""


class TsRobustError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TsRobustError):
    """Invalid configuration or inconsistent shapes at construction time."""


class UsageError(TsRobustError):
    """API misuse: bad labels, consumed tapes, out-of-range arguments."""


class DataError(TsRobustError):
    """Dataset loading, conversion, or normalization failure."""


class TrainingError(TsRobustError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConsistencyError(TsRobustError):
    """Internal bookkeeping mismatch; indicates a bug, aborts the run."""
