"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`SlowCVError`. The ``exit_code`` attribute is what the command-line
driver returns when the error escapes a subcommand.
"""


class SlowCVError(Exception):
    exit_code = 3


class DataError(SlowCVError, ValueError):
    """Malformed or non-finite input data."""

    exit_code = 2


class ShapeError(DataError):
    """Array has the wrong shape, or dimensions disagree."""


class LagError(DataError):
    """Lag time incompatible with the trajectory lengths."""


class NumericalError(SlowCVError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericalError):
    pass


class DegenerateCovarianceError(NumericalError):
    """Covariance has no positive eigenvalue to keep."""


class RankError(NumericalError):
    """Requested dimension exceeds the retained rank."""


class TrainingError(NumericalError):
    """Training diverged (non-finite loss or activations)."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
