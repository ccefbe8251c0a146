"""Exception types shared across the package."""


class LittleParksError(Exception):
    """Base class for all package errors."""


class DegenerateDomain(LittleParksError):
    """Inner region is empty, degenerate, or not strictly contained in the outer one."""


class SpacingTooCoarse(LittleParksError):
    """Grid spacing does not resolve the gap between the two boundaries."""


class SolverDiverged(LittleParksError):
    """An iterative linear solve stalled; usually indicates an indexing bug."""


class InconsistentHolonomy(LittleParksError):
    """A closed loop of link phases is not an integer multiple of 2*pi."""


class GridMismatch(LittleParksError):
    """Two objects were built on different grids."""


class DimensionMismatch(LittleParksError):
    """Vector length does not match the operator dimension."""


class TooLarge(LittleParksError):
    """Problem size exceeds the cap of the dense code path."""


class NoConvergence(LittleParksError):
    """Iterative eigensolver failed to reach the requested residual."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class InconsistentState(LittleParksError):
    """State arrays do not match the grid or the requested variant."""


class NotConverged(LittleParksError):
    """Operation requires a converged minimizer but diagnostics flag failure."""


class ResolutionGuard(LittleParksError):
    """Requested field strength is not resolved by the grid (b*h^2 > 0.5) or is inadmissible."""


class ValidationFailed(LittleParksError):
    """A minimization contradicts the eigenvalue criterion it was meant to confirm."""


class EmptyInput(LittleParksError):
    """An operation received an empty record list."""


class ConfigInvalid(LittleParksError):
    """Run configuration failed validation; `field` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"config error at {field}: {message}")
        self.field = field


class OutputUnwritable(LittleParksError):
    """Output directory or file cannot be written."""
