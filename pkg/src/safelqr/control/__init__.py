"""Numerical core: plant model, LQR algebra, policies, identification and bounds."""

from safelqr.control.algebra import (
    GainSolution,
    closed_loop,
    dare_residual,
    lyap_norm_bound,
    lyap_operator_norm,
    noisy_policy_cost,
    policy_cost,
    policy_value_matrix,
    pseudo_inverse,
    riccati_sensitivity_bound,
    solve_dare,
    solve_dlyap,
    spectral_radius,
)
from safelqr.control.bounds import (
    BoundCertificate,
    SwitchingGapTerms,
    common_certificate,
    escape_bound,
    fourth_moment_bound,
    lyapunov_certificate,
    make_certificate,
    noise_accumulation,
    power_norm_series,
    switching_gap_bound,
    switching_gap_terms,
)
from safelqr.control.dual import (
    DualControlConfig,
    DualRun,
    DualRunSummary,
    Snapshot,
    run_certainty_equivalence,
    run_safe,
    schedule_points,
    update_gain,
)
from safelqr.control.evaluation import (
    BoundCheck,
    CostReport,
    OscillationTrace,
    PowerLawFit,
    ValidationSettings,
    cost_report,
    empirical_cost,
    fit_power_law,
    oscillation_demo,
    rate_window,
    safe_policy_cost_bound,
    validate_bounds,
)
from safelqr.control.markov import History, MarkovEstimator, direct_estimate
from safelqr.control.policy import (
    LinearPolicy,
    Policy,
    PolicyDecision,
    SafePolicy,
    SwitchingPolicy,
    ZeroPolicy,
    linear_policy,
    safe_policy_step,
    safe_threshold,
)
from safelqr.control.reconstruction import ProbeBattery, Reconstruction, block_toeplitz, reconstruct
from safelqr.control.system import (
    GaussianSampler,
    LinearSystem,
    TrajectoryRecord,
    random_stable_system,
    rollout,
    sample_gaussian,
    simulate,
    stationary_covariance,
    step,
    true_markov,
)

__all__ = [
    "BoundCertificate",
    "BoundCheck",
    "CostReport",
    "DualControlConfig",
    "DualRun",
    "DualRunSummary",
    "GainSolution",
    "GaussianSampler",
    "History",
    "LinearPolicy",
    "LinearSystem",
    "MarkovEstimator",
    "OscillationTrace",
    "Policy",
    "PolicyDecision",
    "PowerLawFit",
    "ProbeBattery",
    "Reconstruction",
    "SafePolicy",
    "Snapshot",
    "SwitchingGapTerms",
    "SwitchingPolicy",
    "TrajectoryRecord",
    "ValidationSettings",
    "ZeroPolicy",
    "block_toeplitz",
    "closed_loop",
    "common_certificate",
    "cost_report",
    "dare_residual",
    "direct_estimate",
    "empirical_cost",
    "escape_bound",
    "fit_power_law",
    "fourth_moment_bound",
    "linear_policy",
    "lyap_norm_bound",
    "lyap_operator_norm",
    "lyapunov_certificate",
    "make_certificate",
    "noise_accumulation",
    "noisy_policy_cost",
    "oscillation_demo",
    "policy_cost",
    "policy_value_matrix",
    "power_norm_series",
    "pseudo_inverse",
    "random_stable_system",
    "rate_window",
    "reconstruct",
    "riccati_sensitivity_bound",
    "rollout",
    "run_certainty_equivalence",
    "run_safe",
    "safe_policy_cost_bound",
    "safe_policy_step",
    "safe_threshold",
    "sample_gaussian",
    "schedule_points",
    "simulate",
    "solve_dare",
    "solve_dlyap",
    "spectral_radius",
    "stationary_covariance",
    "step",
    "switching_gap_bound",
    "switching_gap_terms",
    "true_markov",
    "update_gain",
    "validate_bounds",
]
