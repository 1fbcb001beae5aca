"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Vector or loss dimensions do not agree."""


class NonFiniteError(ArithmeticError):
    """A computation produced NaN or inf."""


class IntegrationError(RuntimeError):
    """The reference integrator could not reach the requested time."""


class DivergenceError(NonFiniteError):
    """A training run left the finite region.

    ``step`` is the index of the transition that produced the bad state.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class PartitionError(ValueError):
    """A parameter partition is missing or inconsistent with a loss."""
