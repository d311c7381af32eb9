"""Command-line front end.

Subcommands ``run``, ``compare-ce``, ``oscillation``, ``validate-bounds`` and
``rate-fit`` each build an :class:`~safelqr.experiments.ExperimentConfig` from
an optional TOML file plus flags (flags win), run the matching experiment and
write ``report.json`` with its artifacts.

Exit codes: 0 on success, 1 when a checked invariant fails or a verified
report differs, 2 on usage errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from safelqr.config import PATH, THREADS_ENV, __version__
from safelqr.errors import (
    BoundValidityError,
    InvalidArgumentError,
    SafeLQRError,
    UnstableArgumentError,
    UsageError,
)
from safelqr.experiments import (
    ExperimentConfig,
    RunOptions,
    get_key,
    load_config,
    make_experiment,
    verify_report,
)
from safelqr.io import read_report

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
RUNTIME_OPTIONS = {"command", "config", "output", "workers", "verbose", "quiet", "progress", "verify_against"}
USAGE_ERRORS = (UsageError, InvalidArgumentError, BoundValidityError, UnstableArgumentError)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration; flags override its values")
    common.add_argument("--output", type=Path, help="Report directory (default: a config-keyed folder under ./safelqr_reports)")
    common.add_argument("--workers", type=int, help=f"Worker processes (default: ${THREADS_ENV} or all cores)")
    common.add_argument("--seed", dest="seed", type=int, default=argparse.SUPPRESS, help="Master seed")
    common.add_argument("--progress", action="store_true", help="Show tqdm progress bars")
    common.add_argument("--verify-against", type=Path, help="Re-run the config embedded in this report and compare")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log debug messages")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings and errors only")
    return common


def _add_dual_arguments(parser: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    parser.add_argument("--n", dest="system.n", type=int, default=S, help="State dimension of the random plant")
    parser.add_argument("--p", dest="system.p", type=int, default=S, help="Input dimension of the random plant")
    parser.add_argument("--rho", dest="system.rho", type=float, default=S, help="Spectral radius of the random plant")
    parser.add_argument("--system", dest="system.path", type=str, default=S, help="System JSON file")
    parser.add_argument("--beta", dest="betas", type=float, nargs="+", default=S, help="Exploration decay exponents")
    parser.add_argument("--steps", dest="steps", type=int, default=S, help="Control steps per run")
    parser.add_argument("--replicates", dest="replicates", type=int, default=S, help="Runs per beta")
    parser.add_argument("--schedule", dest="schedule", type=int, nargs="+", default=S, help="Gain-update steps")
    parser.add_argument("--warmup-steps", dest="warmup_steps", type=int, default=S)
    parser.add_argument("--n-probes", dest="n_probes", type=int, default=S, help="Virtual trajectories")
    parser.add_argument("--record-stride", dest="record_stride", type=int, default=S)
    parser.add_argument("--full-record", dest="full_record", action="store_true", default=S)
    parser.add_argument("--probes-per-decade", dest="probes_per_decade", type=int, default=S)
    parser.add_argument("--policy-eval-T", dest="policy_eval_T", type=int, default=S)
    parser.add_argument("--policy-eval-N", dest="policy_eval_N", type=int, default=S)
    parser.add_argument("--fit-k-min", dest="fit_k_min", type=float, default=S)
    parser.add_argument(
        "--frozen-gain", dest="frozen_gain", type=json.loads, default=S, help="Injected gain as a JSON nested list"
    )


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="safelqr", description="Safe LQR dual control experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", parents=[common], help="Safe dual control replicates with aggregated curves")
    _add_dual_arguments(run)
    compare = commands.add_parser("compare-ce", parents=[common], help="Safe scheme against certainty equivalence")
    _add_dual_arguments(compare)

    oscillation = commands.add_parser("oscillation", parents=[common], help="Two-mode switching demonstration")
    oscillation.add_argument("--M", dest="oscillation.M", type=float, default=S, help="Switching threshold")
    oscillation.add_argument("--t", dest="oscillation.t", type=int, nargs="+", default=S, help="Non-action lengths")
    oscillation.add_argument("--steps", dest="oscillation.steps", type=int, default=S)

    validate = commands.add_parser("validate-bounds", parents=[common], help="Monte-Carlo checks of the analytic bounds")
    validate.add_argument("--samples", dest="validation.samples", type=int, default=S, help="Escape-check replicates")
    validate.add_argument("--moment-samples", dest="validation.moment_samples", type=int, default=S)
    validate.add_argument("--gap-T", dest="validation.gap_T", type=int, default=S)
    validate.add_argument("--gap-N", dest="validation.gap_N", type=int, default=S)
    validate.add_argument("--escape-levels", dest="validation.escape_levels", type=float, nargs="+", default=S)
    validate.add_argument("--min-samples", dest="validation.min_samples", type=int, default=S)

    rate = commands.add_parser("rate-fit", parents=[common], help="Power-law slope of a CSV curve")
    rate.add_argument("input", help="Long-format series,k,value or two-column k,value CSV")
    rate.add_argument("--series", dest="rate_fit.series", default=S, help="Series of a long-format file")
    rate.add_argument("--k-min", dest="rate_fit.k_min", type=float, default=S, help="Burn-in")
    rate.add_argument("--points-per-decade", dest="rate_fit.points_per_decade", type=int, default=S)
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)


def resolve_config(args: argparse.Namespace) -> tuple[ExperimentConfig, dict | None]:
    """Configuration of this invocation and the reference report, if any.

    Raises:
        UsageError: If the configuration is invalid or the reference report
            belongs to another command.
    """
    values = vars(args)
    if args.verify_against is not None:
        reference = read_report(args.verify_against)
        try:
            config = ExperimentConfig.model_validate(reference["config"])
        except (KeyError, ValidationError) as exc:
            raise UsageError(f"{args.verify_against} does not embed a valid configuration: {exc}") from exc
        if config.command != args.command:
            raise UsageError(f"{args.verify_against} was produced by {config.command!r}, not {args.command!r}.")
        return config, reference
    overrides = {key: value for key, value in values.items() if key not in RUNTIME_OPTIONS}
    if args.command == "rate-fit":
        overrides["rate_fit.input"] = overrides.pop("input")
    overrides["command"] = args.command
    return load_config(args.config, overrides), None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        config, reference = resolve_config(args)
        output = args.output or PATH.reports / f"{config.command}_{get_key(config.model_dump(mode='json'))[:12]}"
        options = RunOptions(output=output, workers=args.workers, progress=args.progress)
        report, path = make_experiment(config).run(options)
    except ValidationError as exc:
        logger.error("Invalid options: %s", exc)
        return 2
    except USAGE_ERRORS as exc:
        logger.error("%s", exc)
        return 2
    except SafeLQRError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 1

    if config.command == "rate-fit":
        print(json.dumps(report["results"]["fits"], indent=2))
    if reference is not None:
        diff = verify_report(report, reference)
        if diff:
            logger.error("Report differs from %s:\n%s", args.verify_against, diff.pretty())
            return 1
        logger.info("Report matches %s", args.verify_against)
    if not report["passed"]:
        logger.error("Checks failed, see %s", path)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
