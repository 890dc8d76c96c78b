"""Exception hierarchy shared across the package."""


class BipartialError(Exception):
    """Base class for all package errors."""


class InputError(BipartialError, ValueError):
    """Malformed or out-of-range input data."""


class ConfigurationError(BipartialError, ValueError):
    """Invalid combination of parameters."""


class ObjectiveContractError(BipartialError, RuntimeError):
    """An objective produced a negative gain or loss during a merger.

    The merger procedure relies on the cohesion term growing and the
    separation term shrinking at every merger. When an objective breaks
    that, the run is aborted rather than silently producing thresholds
    outside ``[0, 1]``.
    """

    def __init__(self, message, *, left=None, right=None, delta_qs=None, delta_qd=None):
        super().__init__(message)
        self.left = left
        self.right = right
        self.delta_qs = delta_qs
        self.delta_qd = delta_qd


class DegeneratePairError(BipartialError, ArithmeticError):
    """Both deltas of a candidate merger are zero, so no threshold exists."""


class IncomparablePartitionsError(BipartialError, ValueError):
    """Two partitions do not satisfy the ordering needed for a switch point."""


class InvariantViolation(BipartialError):
    """A verification check found results that break a required property."""
