"""Exception types raised by the package."""


class LowRegError(Exception):
    """Base class for package errors."""


class SingularTrace(LowRegError):
    """A field's singular locus meets the entity on which a trace is requested."""


class DegenerateCellError(LowRegError):
    """A cell has (numerically) zero volume or a singular local system."""


class SolverError(LowRegError):
    """An iterative solve failed to reach the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IndefiniteSystemError(LowRegError):
    """The assembled operator is not positive definite."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
