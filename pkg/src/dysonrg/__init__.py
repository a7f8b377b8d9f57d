"""Renormalization-group laboratory for the Dyson hierarchical spin model.

The map acts on even probability densities; the package finds its Gaussian
and non-Gaussian fixed points, diagonalizes the linearizations, locates
critical points of one-parameter families by nested bisection, and measures
the critical exponents gamma and beta -- each piece cross-checked against an
exact small-volume enumeration oracle or a closed-form Gaussian-line oracle.
"""

from .density import (
    GridDensity,
    GridSpec,
    HermiteCoeffs,
    ModelParams,
    gaussian_density,
    hermite_G,
    moments,
    project_to_hermite,
    reconstruct_from_hermite,
)
from .model import (
    AtomicMeasure,
    enumerate_total_spin,
    hamiltonian,
    hierarchical_distance,
    rg_step_atomic,
)
from .rgflow import (
    Classification,
    FlowTrace,
    flow,
    gaussian_variance_map,
    rescale_to_clt,
    rg_step,
    rg_step_general_beta,
    scale_density,
)
from .spectral import (
    LinearizedOperator,
    Spectrum,
    build_linearization,
    eigen_spectrum,
    exponents_from_spectrum,
)
from .fixedpoint import (
    FixedPointResult,
    epsilon_seed,
    find_non_gaussian_fixed_point,
    gaussian_fixed_point,
    solve_fixed_point,
)
from .critparam import (
    CriticalSearchResult,
    DensityFamily,
    critical_search,
    default_gaussian_family,
    drift_onset,
    family_density,
    fit_exponent,
    magnetization_curve,
    non_gaussian_family,
    ordered_probe_family,
    susceptibility_curve,
)

__version__ = "0.1.0"
