"""Hessian-aided random perturbation (HARP) and simultaneous-perturbation baselines."""

from ._harp import (
    ConfigError,
    GainSchedule,
    Gains,
    NoiseMode,
    NumericalError,
    PerturbationKind,
    Problem,
    RateFit,
    RunRecord,
    empirical_rate,
    fit_rate,
    harp_trace_is_smaller,
    iid_covariance_rhs,
    make_function_problem,
    make_quadratic,
    make_skew_quartic,
    predict,
    regularize,
    run,
    run_experiment,
    shaping_factor,
    skew_quartic,
    solve_lyapunov,
    trace_harp_cov,
    trace_identity_cov,
)

__all__ = [
    "ConfigError",
    "GainSchedule",
    "Gains",
    "NoiseMode",
    "NumericalError",
    "PerturbationKind",
    "Problem",
    "RateFit",
    "RunRecord",
    "empirical_rate",
    "fit_rate",
    "harp_trace_is_smaller",
    "iid_covariance_rhs",
    "make_function_problem",
    "make_quadratic",
    "make_skew_quartic",
    "predict",
    "regularize",
    "run",
    "run_experiment",
    "shaping_factor",
    "skew_quartic",
    "solve_lyapunov",
    "trace_harp_cov",
    "trace_identity_cov",
]
