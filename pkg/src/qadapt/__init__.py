"""Adaptive process-noise covariance estimation for Kalman filters.

The package couples a small discrete-time filter engine with windowed
covariance-matching statistics and a box-constrained weighted least-squares
fit of the continuous-time noise power spectral density, yielding adaptive
process-noise techniques that stay positive semi-definite and extrapolate
across measurement outages. A Monte-Carlo harness and CLI benchmark them
against fixed-Q filtering, plain covariance matching, and a two-mode IMM.
"""
from .filter_core import (
    FilterDiagnostics,
    FilterModel,
    InnovationRecord,
    NoiseSegment,
    StateEstimate,
    measurement_update,
    time_update,
    ukf_measurement_update,
    ukf_time_update,
)
from .process_noise import (
    NoiseSpec,
    dmc_coefficients,
    dmc_q_analytic,
    gauss_markov_propagate,
    q_numeric,
    snc_q_analytic,
)
from .adaptive import (
    DesignMatrix,
    SlidingWindow,
    admc_step,
    asnc_step,
    build_design_matrix,
    cm_estimate_full,
    cm_estimate_ss,
    forgetting_update,
    solve_wls_boxed,
    weighting_matrix,
)
from .baselines import ImmBank, imm_step, initial_mode_probs

__version__ = "0.1.0"

__all__ = [
    "FilterDiagnostics",
    "FilterModel",
    "InnovationRecord",
    "NoiseSegment",
    "StateEstimate",
    "measurement_update",
    "time_update",
    "ukf_measurement_update",
    "ukf_time_update",
    "NoiseSpec",
    "dmc_coefficients",
    "dmc_q_analytic",
    "gauss_markov_propagate",
    "q_numeric",
    "snc_q_analytic",
    "DesignMatrix",
    "SlidingWindow",
    "admc_step",
    "asnc_step",
    "build_design_matrix",
    "cm_estimate_full",
    "cm_estimate_ss",
    "forgetting_update",
    "solve_wls_boxed",
    "weighting_matrix",
    "ImmBank",
    "imm_step",
    "initial_mode_probs",
    "__version__",
]
