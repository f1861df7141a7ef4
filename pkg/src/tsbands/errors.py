"""Exception types raised by tsbands."""


class TsBandsError(Exception):
    """Base class for all library errors."""


class InvalidInputError(TsBandsError, ValueError):
    pass


class NumericError(TsBandsError, ArithmeticError):
    pass


class EmptyEstimateError(TsBandsError):
    """Every evaluation point fell at or below the density floor."""


class DegenerateDesignError(TsBandsError):
    """Local regression design matrix is singular or too sparse."""


class DegenerateGridError(TsBandsError):
    pass


class SelectionError(TsBandsError):
    """No bandwidth candidate produced a usable criterion value."""


class StabilityError(TsBandsError):
    pass


class IngestError(TsBandsError):
    pass
