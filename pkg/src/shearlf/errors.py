"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A precondition on an argument was violated."""


class ConsistencyError(ValueError):
    """Pieces that must agree with each other do not."""


class DisparityBudgetError(InvalidArgument):
    """The disparity range of a light field exceeds what the sampling interval allows."""


class DataError(RuntimeError):
    """Input data on disk is missing or malformed."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values."""
