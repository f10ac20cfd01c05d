"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised on malformed arguments (wrong dimension, NaN, bad config)."""


class BudgetExhausted(RuntimeError):
    """Raised when a fresh evaluation of F would exceed the evaluation budget."""


class EvaluationFailure(RuntimeError):
    """F returned a non-finite value."""

    def __init__(self, x, Fx):
        super().__init__(f"F returned non-finite output at x={list(x)}")
        self.x = x
        self.Fx = Fx


class SubproblemFailure(RuntimeError):
    """A convex subproblem solver failed to produce a feasible point."""


class MissingPrerequisite(RuntimeError):
    """A benchmark build step needs results that are not available."""


class UnsupportedProblem(RuntimeError):
    """The problem lacks what the requested operation needs (e.g. a Jacobian)."""
