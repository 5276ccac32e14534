"""Exception types shared across the package."""


class FolioError(Exception):
    """Base class for all package errors."""


class DimensionError(FolioError):
    """Structural shape mismatch, distinct from a metric axiom violation."""


class UnbalancedMarginalsError(FolioError):
    """Marginal masses differ beyond tolerance."""


class ConvergenceError(FolioError):
    """Iterative scheme failed to reach its tolerance.

    Carries the last residual in ``residual``.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BandwidthError(FolioError):
    """Kernel graph disconnected at the requested bandwidth.

    ``suggested`` holds the smallest bandwidth that reconnects the graph.
    """

    def __init__(self, message, suggested=None):
        super().__init__(message)
        self.suggested = suggested


class UnsupportedGeometryError(FolioError):
    """Operation requires coordinates the space does not carry."""


class PartitionError(FolioError):
    """Partition is not total or has an empty class."""


class GenerationError(FolioError):
    """A generator could not produce a valid space."""


class OptimizationError(FolioError):
    """All optimizer restarts failed or stagnated."""
