"""Exception types shared across the package."""


class FraclabError(Exception):
    """Base class for all package errors."""


class ValidationError(FraclabError, ValueError):
    """A parameter or domain object violates its contract."""


class ShapeError(FraclabError, ValueError):
    """Array shapes do not match the basis they are paired with."""


class QuadratureError(FraclabError, RuntimeError):
    """A quadrature did not converge within its refinement budget."""


class ConvergenceError(FraclabError, RuntimeError):
    """An iterative solver exhausted its budget without meeting tolerance."""
