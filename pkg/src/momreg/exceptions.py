"""Exception types raised across the package."""


class ParameterError(ValueError):
    """Invalid input: bad shapes, out-of-range hyperparameters, malformed config."""


class NumericError(ArithmeticError):
    """A solver produced a non-finite or exploding iterate.

    Parameters
    ----------
    message : str
    iteration : int or None
        Zero-based iteration at which the failure was detected.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
