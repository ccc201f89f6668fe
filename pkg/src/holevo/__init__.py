"""Holevo-Nagaoka bounds for multiparameter quantum estimation and simulation of the collective measurement that attains them."""

__version__ = "0.1.0"

from .bounds import (
    BoundReport,
    GammaMatrix,
    HNOptions,
    InfluenceVector,
    NotEstimableError,
    c_functional,
    compute_slds,
    efficient_influence,
    gamma_matrix,
    helstrom_bound,
    hn_bound,
    quantum_fisher,
)
from .canonical import CanonicalTransform, antisym_canonical, canonical_transform, y_observables
from .gaussian import gaussian_bound_report, gaussian_gamma, gaussian_scores, thermal_efficient_influence
from .linalg import DEFAULT_TOL, OperatorError, Tolerances, UnsolvableError, lyapunov_solve
from .models import (
    FiniteDimModel,
    ModelError,
    NonparametricModel,
    SpinModel,
    ThermalGaussianModel,
    make_affine_model,
    make_linear_thermal_model,
    make_nonparametric_model,
    make_spin_model,
    qubit_restricted_model,
)
