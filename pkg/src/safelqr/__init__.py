"""
safelqr
=====================

Safe dual control of linear-quadratic systems: online identification of an
unknown stable plant while a threshold-switching policy keeps every deployed
controller at bounded cost.
"""

__license__ = "MIT"

# Public facade: expose the control library and the experiment layer
from .config import PATH, __version__
from .control import (
    BoundCertificate,
    DualControlConfig,
    DualRun,
    LinearPolicy,
    LinearSystem,
    MarkovEstimator,
    ProbeBattery,
    SafePolicy,
    SwitchingPolicy,
    TrajectoryRecord,
    ZeroPolicy,
    empirical_cost,
    escape_bound,
    fit_power_law,
    fourth_moment_bound,
    make_certificate,
    oscillation_demo,
    policy_cost,
    random_stable_system,
    reconstruct,
    run_certainty_equivalence,
    run_safe,
    simulate,
    solve_dare,
    solve_dlyap,
    switching_gap_bound,
    validate_bounds,
)
from .errors import (
    BoundValidityError,
    CertificateUnavailableError,
    DareFailureError,
    DegenerateProbesError,
    DivergedError,
    InvalidArgumentError,
    SafeLQRError,
    UnavailableEstimateError,
    UnstableArgumentError,
    UsageError,
)
from .experiments import ExperimentConfig, RunOptions, load_config, make_experiment

__all__ = [
    "PATH",
    "__version__",
    "BoundCertificate",
    "BoundValidityError",
    "CertificateUnavailableError",
    "DareFailureError",
    "DegenerateProbesError",
    "DivergedError",
    "DualControlConfig",
    "DualRun",
    "ExperimentConfig",
    "InvalidArgumentError",
    "LinearPolicy",
    "LinearSystem",
    "MarkovEstimator",
    "ProbeBattery",
    "RunOptions",
    "SafeLQRError",
    "SafePolicy",
    "SwitchingPolicy",
    "TrajectoryRecord",
    "UnavailableEstimateError",
    "UnstableArgumentError",
    "UsageError",
    "ZeroPolicy",
    "empirical_cost",
    "escape_bound",
    "fit_power_law",
    "fourth_moment_bound",
    "load_config",
    "make_certificate",
    "make_experiment",
    "oscillation_demo",
    "policy_cost",
    "random_stable_system",
    "reconstruct",
    "run_certainty_equivalence",
    "run_safe",
    "simulate",
    "solve_dare",
    "solve_dlyap",
    "switching_gap_bound",
    "validate_bounds",
]
