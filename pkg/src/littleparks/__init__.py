"""Ginzburg-Landau and magnetic-Laplacian solver for a strong localized field.

Computes lowest magnetic eigenvalues on a domain and its punctured
counterpart, minimizes the full and effective Ginzburg-Landau energies,
and reproduces flux periodicity, effective-model convergence, and
Little-Parks oscillations on desk-scale grids.
"""

from .eigensolve import DEFAULT_SEED, EigenResult, dense_oracle, lowest_eigenpair, rayleigh_quotient
from .errors import (
    ConfigInvalid,
    DegenerateDomain,
    DimensionMismatch,
    EmptyInput,
    GridMismatch,
    InconsistentHolonomy,
    InconsistentState,
    LittleParksError,
    NoConvergence,
    NotConverged,
    OutputUnwritable,
    ResolutionGuard,
    SolverDiverged,
    SpacingTooCoarse,
    TooLarge,
    ValidationFailed,
)
from .experiments import ExperimentHarness, SweepRecord, TransitionReport
from .fields import (
    LinkField,
    NodePhases,
    ScalarField,
    build_gauge,
    build_link_field,
    omega_indicator_source,
    solve_dirichlet_poisson,
)
from .geometry import (
    Disk,
    DomainSpec,
    Grid,
    Rect,
    build_grid,
    cell_overlap_area,
    overlap_weight,
    quadtree_overlap,
)
from .gl_energy import (
    GLParams,
    GLState,
    curl_deviation_l2,
    current_l2,
    energy,
    fd_gradient_error,
    gradient,
    minimize,
    omega_mass,
    psi_l2,
    real_profile,
    stationarity_residual,
    supercurrent,
    zero_state,
)
from .operators import MagneticOperator, apply, assemble, gauge_conjugate, quadratic_form

__version__ = "0.1.0"
