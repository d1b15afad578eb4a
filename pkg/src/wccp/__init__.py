"""Sparse recovery from quadratic measurements with weakly-convex-concave penalties."""

from .initialization import InitConfig, spectral_init
from .model import MeasurementSet, StandardizationReport, curvature_form, gradient, loss, residuals, standardize
from .penalties import (
    Family,
    PenaltySpec,
    penalty_derivative,
    penalty_mu,
    penalty_rho,
    penalty_value,
    prox_scalar,
    weight_vector,
)
from .solver import (
    Algorithm,
    SolverConfig,
    SolverResult,
    Termination,
    armijo_step,
    fixed_point_residual,
    local_min_check,
    oracle_solve,
    solve,
    solve_irl1,
    solve_pga,
)
from .tuning import TuningConfig, lambda_rule, relative_error, support_metrics, tune_lambda

__version__ = "0.1.0"
