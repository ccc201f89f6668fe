"""Simulation of the collective measurement: design, engines, protocol."""

from .config import ConfigError, RunResult, SchemeConfig
from .exact import (
    BudgetError,
    ExactEngine,
    GridMassError,
    build_hamiltonian,
    exact_evolve_and_measure,
    exact_run,
    gaussian_overlap,
    kappa_t_sweep,
    qubit_blocks,
    tensor_blocks,
)
from .linear import (
    MissingChannelError,
    estimator,
    linear_readout_moments,
    linearized_simulate,
    simulate_plan,
)
from .plan import GdyneSetting, SchemePlan, design_scheme, optimize_gdyne, plan_from_moments, state_moments
from .protocol import AcquisitionError, acquire, acquisition_design, separable_baseline, two_step_protocol

__all__ = [
    "AcquisitionError",
    "BudgetError",
    "ConfigError",
    "ExactEngine",
    "GdyneSetting",
    "GridMassError",
    "MissingChannelError",
    "RunResult",
    "SchemeConfig",
    "SchemePlan",
    "acquire",
    "acquisition_design",
    "build_hamiltonian",
    "design_scheme",
    "estimator",
    "exact_evolve_and_measure",
    "exact_run",
    "gaussian_overlap",
    "kappa_t_sweep",
    "linear_readout_moments",
    "linearized_simulate",
    "optimize_gdyne",
    "plan_from_moments",
    "qubit_blocks",
    "separable_baseline",
    "simulate_plan",
    "state_moments",
    "tensor_blocks",
    "two_step_protocol",
]
