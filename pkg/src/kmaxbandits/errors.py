"""Exception types raised across the package."""


class KMaxError(Exception):
    """Base class for all package errors."""


class InputError(KMaxError, ValueError):
    """An argument violates an operation's precondition."""


class ValidationError(InputError):
    """An arm or model fails its regularity checks."""


class CapacityError(KMaxError):
    """A combinatorial enumeration would exceed its configured cap."""


class ConsistencyError(KMaxError):
    """Feedback does not match the action it is reported for."""


class ModelError(KMaxError, ValueError):
    """A parametric model produced a nonpositive exponential rate."""


class SolverError(KMaxError):
    """The MLE solver did not converge.

    Carries the last iterate and its gradient norm so callers can inspect
    how far the fit got.
    """

    def __init__(self, message, theta=None, grad_norm=None):
        super().__init__(message)
        self.theta = theta
        self.grad_norm = grad_norm


class RoundError(KMaxError):
    """Wraps an error raised while simulating a specific round."""

    def __init__(self, round_index, seed, cause):
        super().__init__(f"round {round_index} (seed {seed}): {cause}")
        self.round_index = round_index
        self.seed = seed
        self.cause = cause


class DomainError(InputError):
    """A parameter leaves the open domain where every observed rate is positive."""
