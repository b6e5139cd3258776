"""Exception types raised across the package."""


class ValidationError(ValueError):
    """Invalid input data or parameters."""


class KnotOrderError(ValidationError):
    """Interior knots are not strictly increasing."""


class KnotBoundsError(ValidationError):
    """An interior knot lies on or outside the domain bounds."""


class SplineOrderError(ValidationError):
    """Spline order below 1."""


class DomainError(ValidationError):
    """Evaluation point outside the model domain."""


class RankDeficiencyError(ValueError):
    """A linear system that must be nonsingular is not."""


class OverparameterizedError(ValueError):
    """More coefficients than observations for every candidate model."""


class ConvergenceError(RuntimeError):
    """The lasso solver hit its iteration cap.

    The best iterate is kept on ``solution`` so callers can inspect its
    KKT residual.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
