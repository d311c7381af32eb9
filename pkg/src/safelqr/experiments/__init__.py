"""Reproducible experiments driven by :class:`ExperimentConfig`."""

from safelqr.experiments.experiment import (
    REPORT_NAME,
    Experiment,
    ExperimentResult,
    RunOptions,
    derive_seed,
    get_key,
    run_replicates,
)
from safelqr.experiments.settings import (
    ExperimentConfig,
    OscillationSettings,
    RateFitSettings,
    SystemSpec,
    load_config,
)
from safelqr.experiments.suites import (
    EXPERIMENTS,
    CompareCEExperiment,
    OscillationExperiment,
    RateFitExperiment,
    RunExperiment,
    ValidateBoundsExperiment,
    make_experiment,
    verify_report,
)

__all__ = [
    "CompareCEExperiment",
    "EXPERIMENTS",
    "Experiment",
    "ExperimentConfig",
    "ExperimentResult",
    "OscillationExperiment",
    "OscillationSettings",
    "REPORT_NAME",
    "RateFitExperiment",
    "RateFitSettings",
    "RunExperiment",
    "RunOptions",
    "SystemSpec",
    "ValidateBoundsExperiment",
    "derive_seed",
    "get_key",
    "load_config",
    "make_experiment",
    "run_replicates",
    "verify_report",
]
