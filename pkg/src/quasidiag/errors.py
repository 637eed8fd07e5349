"""Exception types shared across the package."""


class MeshError(Exception):
    """Base class for mesh construction and topology failures."""


class DegenerateSimplex(MeshError):
    """A simplex (or facet) with numerically vanishing measure."""


class NonManifoldMesh(MeshError):
    """A facet is shared by more than two elements."""


class UnsupportedDimension(MeshError):
    """Requested space dimension is outside the supported range {2, 3, 4}."""


class EmptySpace(Exception):
    """A finite element space ended up with no degrees of freedom."""


class DimensionError(Exception):
    """Operand shapes or sizes do not match."""


class ConfigError(Exception):
    """Invalid experiment configuration."""


class SolverFailure(Exception):
    """An iterative solve missed its tolerance within the iteration cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class EigsNotConverged(Exception):
    """Eigenvalue iteration hit its cap; ``report`` carries the best estimates."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
