"""Exception types shared across the package."""


class EightfoldError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(EightfoldError, ValueError):
    """Bad user input: parameter ranges, malformed configs, unsupported options."""


class DimensionMismatchError(EightfoldError, ValueError):
    """Two loop-space objects do not share period or truncation order."""


class DegenerateLoopError(EightfoldError):
    """A loop lacks the structure an operation needs (e.g. zero time derivative)."""


class CollisionError(EightfoldError):
    """Two bodies approach closer than the collision threshold.

    Carries the offending collocation time, the body pair and the distance.
    """

    def __init__(self, time, pair, distance):
        self.time = float(time)
        self.pair = tuple(pair)
        self.distance = float(distance)
        super().__init__(
            f"bodies {pair[0]} and {pair[1]} at distance {distance:.3e} "
            f"at t={time:.6f}"
        )


class ConvergenceError(EightfoldError):
    """Newton or continuation failed to reach the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None, detail=None):
        self.residual = residual
        self.iterations = iterations
        self.detail = detail
        super().__init__(message)


class ClassificationError(EightfoldError):
    """An eigenspace signature matches no irreducible-representation row."""

    def __init__(self, message, signature=None):
        self.signature = signature
        super().__init__(message)


class OrderAmbiguityError(EightfoldError):
    """The leading reduced-action coefficient is below tolerance, so the
    bifurcation order cannot be decided at the requested order."""

