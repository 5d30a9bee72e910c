"""Exception types shared across the package."""


class DensityShapeError(Exception):
    """Base class for all package errors."""


class DegenerateSampleError(DensityShapeError, ValueError):
    """Sample has zero spread (all values equal) where spread is required."""


class UnresolvedModeStructureError(DensityShapeError, RuntimeError):
    """Mode count failed to stabilise under grid refinement."""


class UnnormalizedDensityError(DensityShapeError, ValueError):
    """A density callable does not integrate to 1 on its stated support."""


class ConstraintUnreachableError(DensityShapeError, RuntimeError):
    """No annealing restart satisfied the requested shape constraint."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InvalidCovarianceError(DensityShapeError, ValueError):
    """Requested Gaussian covariance is not positive definite."""


class IngestError(DensityShapeError, ValueError):
    """Input file could not be parsed into a sample."""
