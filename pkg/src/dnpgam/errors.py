"""Exception types shared across the package."""


class DnpgamError(Exception):
    """Base class for all package-specific errors."""


class DegenerateCovariateError(DnpgamError):
    """Covariate has too few distinct values to place knots on."""


class InfeasibleMeanError(DnpgamError):
    """A target mean lies outside the open convex hull of the reference support.

    Usually indicates a mis-specified link function for the data at hand.
    """

    def __init__(self, message, observation=None):
        super().__init__(message)
        self.observation = observation


class VarianceDegeneracyError(DnpgamError):
    """A conditional variance fell below the numerical floor."""


class DivergedError(DnpgamError):
    """An iterative fit failed to converge; carries the trace if available."""

    def __init__(self, message, trace=None, best=None):
        super().__init__(message)
        self.trace = trace
        self.best = best


class SelectionError(DnpgamError):
    """Smoothing-parameter selection failed for every candidate."""


class RankDeficiencyError(DnpgamError):
    """A matrix that must be inverted is numerically singular."""

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction


class InputError(DnpgamError):
    """Bad user input (missing columns, malformed cells, invalid options)."""
