"""Exception hierarchy shared by every frechetlab module."""


class FrechetLabError(Exception):
    """Base class for all library errors."""


class InvalidMatrix(FrechetLabError, ValueError):
    pass


class DimensionMismatch(FrechetLabError, ValueError):
    pass


class NearSingular(FrechetLabError, ArithmeticError):
    pass


class NumericalBreakdown(FrechetLabError, ArithmeticError):
    pass


class UnsupportedGeodesic(FrechetLabError, ValueError):
    """Fisher-Rao distance requested with both mean and covariance differing."""


class NoConvergence(FrechetLabError, RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class EmptyWindow(FrechetLabError, ValueError):
    """The observation window holds no points, so no Frechet mean exists."""


class Unsupported(FrechetLabError, ValueError):
    pass


class DomainError(FrechetLabError, ValueError):
    pass


class InfeasibleThreshold(FrechetLabError, ValueError):
    pass
