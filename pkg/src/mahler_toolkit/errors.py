"""Exception hierarchy shared by the kernels and the outer surfaces.

Each exception carries the process exit status the CLI reports for it.
"""


class MahlerError(Exception):
    exit_code = 1


class ParseError(MahlerError):
    exit_code = 2


class PrecisionLoss(MahlerError):
    """Raised when a requested coefficient lies beyond the known precision."""

    exit_code = 3


class IndeterminateValuation(PrecisionLoss):
    """All known coefficients vanish, so the valuation cannot be decided."""


class DivisionByZeroSeries(MahlerError):
    exit_code = 3


class UnsupportedSplitting(MahlerError):
    """A polynomial does not split inside a single number-field extension."""

    exit_code = 4


class NoRelationFound(MahlerError):
    exit_code = 5


class SingularGauge(MahlerError):
    pass


class CyclicSearchExhausted(MahlerError):
    pass


class FactorRecurrenceStuck(MahlerError):
    pass


class RecursionBudgetExceeded(MahlerError):
    pass


class NotRegularSingularShape(MahlerError):
    pass


class InsufficientData(MahlerError):
    pass
