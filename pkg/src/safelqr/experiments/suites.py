"""The experiments behind each command-line subcommand."""

import logging
import math
from typing import Any, Callable, ClassVar

import numpy as np
from deepdiff import DeepDiff

from safelqr.control.dual import DualControlConfig, DualRun, Snapshot, run_certainty_equivalence, run_safe
from safelqr.control.evaluation import (
    OSCILLATION_A0,
    OSCILLATION_A1,
    OSCILLATION_X0,
    OscillationTrace,
    fit_power_law,
    oscillation_demo,
    rate_window,
    validate_bounds,
)
from safelqr.control.system import LinearSystem
from safelqr.errors import DivergedError, InvalidArgumentError
from safelqr.experiments.experiment import (
    TIMING_FIELDS,
    Experiment,
    ExperimentResult,
    RunOptions,
    derive_seed,
    run_replicates,
)
from safelqr.experiments.settings import ExperimentConfig
from safelqr.io.formats import Curves, read_curves, system_to_dict

logger = logging.getLogger(__name__)

SNAPSHOT_METRICS: dict[str, Callable[[Snapshot, float | None], float | None]] = {
    "H0_err": lambda s, J: s.H_err[0],
    "A_err": lambda s, J: s.A_err,
    "B_err": lambda s, J: s.B_err,
    "K_err": lambda s, J: s.K_err,
    "gain_gap": lambda s, J: None if not J else (s.gain_cost - J) / J,
    "deployed_cost": lambda s, J: s.deployed_cost,
    "empirical_cost": lambda s, J: s.empirical_cost,
}
FIT_METRICS = ("H0_err", "A_err", "B_err", "K_err", "gain_gap")

# Settling thresholds of the default two-mode demonstration.
OSCILLATION_TAIL = 20
OSCILLATION_TAIL_PEAK = 2.0
SUPPRESSED_PEAK = 3.0
SUPPRESSED_FINAL = 0.1


def dual_replicate(sys: LinearSystem, config: DualControlConfig, scheme: str) -> dict[str, Any]:
    """Run one dual-control replicate; a safe-scheme divergence is returned, not raised."""
    runner = run_safe if scheme == "safe" else run_certainty_equivalence
    try:
        run = runner(sys, config)
    except DivergedError as exc:
        return {"run": None, "error": str(exc), "diverged_step": exc.step}
    return {"run": run, "error": None, "diverged_step": run.summary.diverged_step}


def quantile_curves(snapshots: list[list[Snapshot]], J_star: float | None) -> dict[str, dict[str, list]]:
    """Median and quartiles of every snapshot metric across replicates.

    Non-finite and missing values are left out per step; a step without any
    finite value gets ``nan``.
    """
    ks = sorted({s.k for run in snapshots for s in run})
    by_k = [{s.k: s for s in run} for run in snapshots]
    curves: dict[str, dict[str, list]] = {}
    for metric, fn in SNAPSHOT_METRICS.items():
        median, q25, q75, count = [], [], [], []
        for k in ks:
            values = [fn(run[k], J_star) for run in by_k if k in run]
            values = np.array([v for v in values if v is not None and math.isfinite(v)])
            count.append(int(values.size))
            if values.size:
                lo, mid, hi = np.percentile(values, [25, 50, 75])
            else:
                lo = mid = hi = math.nan
            median.append(float(mid))
            q25.append(float(lo))
            q75.append(float(hi))
        curves[metric] = {"k": ks, "median": median, "q25": q25, "q75": q75, "count": count}
    return curves


def slope_fits(curves: dict[str, dict[str, list]], k_min: float) -> dict[str, dict | None]:
    """Power-law fits of the median curves over ``k >= k_min``."""
    fits = {}
    for metric in FIT_METRICS:
        curve = curves[metric]
        window = rate_window(zip(curve["k"], curve["median"]), k_min=k_min)
        fits[metric] = fit_power_law(window).model_dump() if len(window) >= 5 else None
    return fits


def verify_report(report: dict, reference: dict) -> DeepDiff:
    """Differences between two reports, ignoring timing fields and file lists."""
    excluded = [rf"\['{name}'\]" for name in TIMING_FIELDS]
    return DeepDiff(reference, report, exclude_regex_paths=excluded)


class DualExperiment(Experiment):
    """Shared plumbing of experiments running dual-control replicates."""

    schemes: ClassVar[tuple[str, ...]] = ("safe",)

    def dual_config(self, beta: float, beta_index: int, replicate: int) -> DualControlConfig:
        c = self.config
        return DualControlConfig(
            beta=beta,
            total_steps=c.steps,
            schedule=c.schedule,
            n_probes=c.n_probes,
            seed=derive_seed(c.seed, replicate, beta_index),
            record_stride=c.stride,
            full_record=c.full_record,
            sweep=beta in (0.0, 0.5),
            warmup_steps=c.warmup_steps,
            frozen_gain=c.frozen_gain,
            probes_per_decade=c.probes_per_decade,
            policy_eval_T=c.policy_eval_T,
            policy_eval_N=c.policy_eval_N,
        )

    def system(self) -> LinearSystem:
        return self.config.system.build(derive_seed(self.config.seed, "system"))

    def replicates(self, sys: LinearSystem, options: RunOptions) -> dict[tuple[str, int, int], dict]:
        """Every ``(scheme, beta_index, replicate)`` outcome of the configuration."""
        keys, tasks = [], []
        for b, beta in enumerate(self.config.betas):
            for r in range(self.config.replicates):
                config = self.dual_config(beta, b, r)
                for scheme in self.schemes:
                    keys.append((scheme, b, r))
                    tasks.append((sys, config, scheme))
        results = run_replicates(dual_replicate, tasks, options.workers, options.progress, desc=self.name)
        return dict(zip(keys, results))


def _summary(outcome: dict) -> dict:
    run: DualRun | None = outcome["run"]
    if run is None:
        return {"diverged": True, "diverged_step": outcome["diverged_step"], "error": outcome["error"]}
    return run.summary.model_dump()


class RunExperiment(DualExperiment):
    """Safe dual control for every beta and replicate, with aggregated curves."""

    name: str = "run"

    def _run(self, options: RunOptions) -> ExperimentResult:
        sys = self.system()
        outcomes = self.replicates(sys, options)
        curves = Curves()
        files: dict[str, Any] = {"system": sys}
        per_beta = []
        passed = True
        for b, beta in enumerate(self.config.betas):
            runs = [outcomes["safe", b, r] for r in range(self.config.replicates)]
            failures = sum(o["run"] is None for o in runs)
            passed &= failures == 0
            finished = [o["run"] for o in runs if o["run"] is not None]
            J_star = finished[0].summary.J_star if finished else None
            aggregate = quantile_curves([run.snapshots for run in finished], J_star)
            for metric, curve in aggregate.items():
                for stat in ("median", "q25", "q75"):
                    curves.add(f"beta={beta:g}/{metric}/{stat}", curve["k"], curve[stat])
            exploit = max((run.summary.max_exploit_ratio for run in finished), default=0.0)
            passed &= exploit <= 1.0
            for r, outcome in enumerate(runs):
                if outcome["run"] is not None:
                    files[f"trajectory_b{b}_r{r}"] = outcome["run"].record
            per_beta.append(
                {
                    "beta": beta,
                    "diverged": failures,
                    "max_exploit_ratio": exploit,
                    "J_star": J_star,
                    "curves": aggregate,
                    "slopes": slope_fits(aggregate, self.config.fit_k_min),
                    "replicates": [_summary(o) for o in runs],
                    "snapshots": [
                        [s.model_dump(include={"k", "H_err", "A_err", "B_err"}) for s in run.snapshots]
                        for run in finished
                    ],
                }
            )
            logger.info("beta=%g: %d/%d replicates finished", beta, len(finished), len(runs))
        files["curves"] = curves
        return ExperimentResult(
            summary={"system": system_to_dict(sys), "betas": per_beta},
            file=files,
            passed=passed,
        )


class CompareCEExperiment(DualExperiment):
    """Safe scheme against certainty equivalence on identical systems and seeds."""

    name: str = "compare-ce"
    schemes: ClassVar[tuple[str, ...]] = ("safe", "ce")

    def _run(self, options: RunOptions) -> ExperimentResult:
        sys = self.system()
        outcomes = self.replicates(sys, options)
        per_beta = []
        curves = Curves()
        passed = True
        for b, beta in enumerate(self.config.betas):
            rows = []
            counts = {"safe": 0, "ce": 0}
            for r in range(self.config.replicates):
                row: dict[str, Any] = {"replicate": r, "seed": derive_seed(self.config.seed, r, b)}
                for scheme in self.schemes:
                    outcome = outcomes[scheme, b, r]
                    summary = _summary(outcome)
                    counts[scheme] += bool(summary["diverged"])
                    J_star = summary.get("J_star")
                    final = summary.get("final_gain_cost")
                    row[scheme] = {
                        "diverged": summary["diverged"],
                        "diverged_step": summary["diverged_step"],
                        "final_A_err": summary.get("final_A_err"),
                        "final_gain_cost": final,
                        "final_cost_gap": None if final is None or not J_star else (final - J_star) / J_star,
                        "summary": summary,
                    }
                    if outcome["run"] is not None:
                        norms = [s.A_err for s in outcome["run"].snapshots]
                        curves.add(
                            f"beta={beta:g}/{scheme}/r{r}/A_err",
                            [s.k for s in outcome["run"].snapshots],
                            norms,
                        )
                rows.append(row)
            passed &= counts["safe"] == 0
            per_beta.append({"beta": beta, "diverged": counts, "replicates": rows})
            logger.info("beta=%g: safe diverged %d, CE diverged %d", beta, counts["safe"], counts["ce"])
        return ExperimentResult(
            summary={"system": system_to_dict(sys), "betas": per_beta},
            file={"curves": curves},
            passed=passed,
        )


def oscillation_checks(trace: OscillationTrace) -> dict[str, Any]:
    """Whether the default demonstration keeps oscillating (t = 1) or settles (t >= 2)."""
    norms = trace.norms
    if trace.t == 1:
        tail = float(np.max(norms[-OSCILLATION_TAIL:]))
        return {"tail_peak": tail, "passed": tail >= OSCILLATION_TAIL_PEAK}
    peak, final = float(np.max(norms)), float(norms[-1])
    return {"peak": peak, "final": final, "passed": peak <= SUPPRESSED_PEAK and final <= SUPPRESSED_FINAL}


class OscillationExperiment(Experiment):
    """Noise-free two-mode switching for each requested non-action length."""

    name: str = "oscillation"

    def _run(self, options: RunOptions) -> ExperimentResult:
        settings = self.config.oscillation
        defaults = (
            settings.A0 == [list(r) for r in OSCILLATION_A0]
            and settings.A1 == [list(r) for r in OSCILLATION_A1]
            and settings.x0 == list(OSCILLATION_X0)
            and settings.M == 1.0
            and settings.steps >= 60
        )
        curves = Curves()
        traces = []
        passed = True
        for t in settings.t:
            trace = oscillation_demo(settings.A0, settings.A1, settings.M, t, settings.x0, settings.steps)
            ks = range(settings.steps + 1)
            curves.add(f"t={t}/norm", ks, trace.norms)
            for i in range(trace.states.shape[1]):
                curves.add(f"t={t}/x{i}", ks, trace.states[:, i])
            curves.add(f"t={t}/mode", range(settings.steps), trace.modes)
            entry: dict[str, Any] = {"t": t, "max_norm": float(np.max(trace.norms)), "final_norm": float(trace.norms[-1])}
            if defaults and t <= 2:
                check = oscillation_checks(oscillation_demo(t=t, steps=60))
                entry["check"] = check
                passed &= check["passed"]
            traces.append(entry)
        return ExperimentResult(summary={"traces": traces}, file={"trajectories": curves}, passed=passed)


class ValidateBoundsExperiment(Experiment):
    """Monte-Carlo validation of the analytic bounds."""

    name: str = "validate-bounds"

    def _run(self, options: RunOptions) -> ExperimentResult:
        settings = self.config.validation.model_copy(update={"seed": self.config.seed})
        checks = validate_bounds(settings)
        failed = [c.name for c in checks if c.status == "fail"]
        for name in failed:
            logger.warning("Bound check %s failed", name)
        return ExperimentResult(
            summary={
                "reduced": settings.reduced,
                "checks": [c.model_dump() for c in checks],
                "failed": failed,
            },
            passed=not failed,
        )


class RateFitExperiment(Experiment):
    """Power-law slope of curves read from a CSV file."""

    name: str = "rate-fit"

    def _run(self, options: RunOptions) -> ExperimentResult:
        settings = self.config.rate_fit
        if settings.input is None:
            raise InvalidArgumentError("rate-fit needs an input CSV.")
        source = read_curves(settings.input)
        names = list(source.series) if settings.series is None else [settings.series]
        fits, fitted = {}, Curves()
        for name in names:
            if name not in source:
                raise InvalidArgumentError(f"Series {name!r} not found in {settings.input}.")
            window = rate_window(source[name], settings.k_min, settings.points_per_decade)
            fit = fit_power_law(window)
            fits[name] = fit.model_dump()
            ks = [k for k, _ in window]
            fitted.add(name, ks, [v for _, v in window])
            fitted.add(f"{name}/fitted", ks, [math.exp(fit.intercept) * k**fit.slope for k in ks])
        return ExperimentResult(summary={"fits": fits}, file={"fit": fitted})


EXPERIMENTS: dict[str, type[Experiment]] = {
    "run": RunExperiment,
    "compare-ce": CompareCEExperiment,
    "oscillation": OscillationExperiment,
    "validate-bounds": ValidateBoundsExperiment,
    "rate-fit": RateFitExperiment,
}


def make_experiment(config: ExperimentConfig) -> Experiment:
    return EXPERIMENTS[config.command](config=config)
