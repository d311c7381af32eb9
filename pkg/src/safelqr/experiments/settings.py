"""Experiment configuration: TOML files, command-line overrides and validation."""

import tomllib
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from safelqr.config import PathType
from safelqr.control.evaluation import (
    OSCILLATION_A0,
    OSCILLATION_A1,
    OSCILLATION_X0,
    ValidationSettings,
)
from safelqr.control.policy import check_beta
from safelqr.control.system import LinearSystem, random_stable_system
from safelqr.errors import SafeLQRError, UsageError
from safelqr.io.formats import read_system

Command = Literal["run", "compare-ce", "oscillation", "validate-bounds", "rate-fit"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SystemSpec(_Section):
    """Where the plant comes from: a system file or a random stable draw."""

    n: int = Field(3, ge=1, description="State dimension of a random plant.")
    p: int = Field(2, ge=1, description="Input dimension of a random plant.")
    rho: float = Field(0.9, gt=0.0, lt=1.0, description="Spectral radius of a random plant.")
    path: str | None = Field(None, description="System JSON file; overrides n, p and rho.")

    def build(self, seed: int) -> LinearSystem:
        """Load the system file, or draw the random plant from ``seed``.

        Raises:
            UnstableArgumentError: If the loaded plant is not stable.
        """
        if self.path is not None:
            return read_system(self.path, require_stable=True)
        return random_stable_system(self.n, self.p, self.rho, np.random.default_rng(seed))


class OscillationSettings(_Section):
    """Two-mode switched system of the oscillation demonstration."""

    M: float = Field(1.0, gt=0.0, description="Switching threshold.")
    t: list[int] = Field([1, 2], min_length=1, description="Non-action run lengths to simulate.")
    steps: int = Field(60, ge=1, description="Steps per trajectory.")
    x0: list[float] = Field(list(OSCILLATION_X0), description="Initial state.")
    A0: list[list[float]] = Field([list(r) for r in OSCILLATION_A0], description="Mode applied after a trigger.")
    A1: list[list[float]] = Field([list(r) for r in OSCILLATION_A1], description="Mode applied otherwise.")

    @field_validator("t")
    @classmethod
    def _check_t(cls, value):
        if any(t < 1 for t in value):
            raise ValueError("every t must be >= 1")
        return value


class RateFitSettings(_Section):
    """Input and window of the ``rate-fit`` command."""

    input: str | None = Field(None, description="CSV with a long-format or two-column (k, value) curve.")
    series: str | None = Field(None, description="Series to fit in a long-format file; all series if unset.")
    k_min: float = Field(1e3, ge=0.0, description="Burn-in: points with k < k_min are dropped.")
    points_per_decade: int = Field(10, ge=1, description="Logarithmic subsampling density.")


class ExperimentConfig(_Section):
    """Complete, validated configuration of one command.

    The configuration is echoed into every report; running the same command
    with it reproduces the report apart from timing fields.
    """

    command: Command = Field("run", description="Subcommand this configuration drives.")
    system: SystemSpec = Field(default_factory=SystemSpec)
    betas: list[float] = Field([0.25], min_length=1, description="Exploration decay exponents.")
    steps: int = Field(100_000, ge=1, description="Control steps per run.")
    replicates: int = Field(10, ge=1, description="Independent runs per beta.")
    seed: int = Field(0, ge=0, description="Master seed; every stream is derived from it.")
    schedule: list[int] | None = Field(None, description="Gain-update steps; default floor(10^(j/2)).")
    warmup_steps: int | None = Field(None, description="Pure exploration steps; default n + p.")
    n_probes: int = Field(50, ge=1, description="Virtual trajectories of the reconstruction.")
    record_stride: int | None = Field(None, ge=1, description="Trajectory CSV stride; default steps // 10000.")
    full_record: bool = Field(False, description="Export full-state trajectory columns.")
    probes_per_decade: int = Field(8, ge=0, le=128, description="Snapshot density per decade.")
    policy_eval_T: int = Field(0, ge=0, description="Rollout length of deployed-policy cost estimates.")
    policy_eval_N: int = Field(10, ge=1, description="Rollouts of deployed-policy cost estimates.")
    frozen_gain: list[list[float]] | None = Field(None, description="Gain injected instead of every estimate.")
    fit_k_min: float = Field(1e3, ge=0.0, description="Burn-in of the slope fits in run reports.")
    oscillation: OscillationSettings = Field(default_factory=OscillationSettings)
    validation: ValidationSettings = Field(default_factory=ValidationSettings)
    rate_fit: RateFitSettings = Field(default_factory=RateFitSettings)

    @field_validator("betas")
    @classmethod
    def _check_betas(cls, value):
        for beta in value:
            check_beta(beta, sweep=True)
        return value

    @property
    def stride(self) -> int:
        return self.record_stride if self.record_stride is not None else max(1, self.steps // 10_000)


def _set_dotted(data: dict, key: str, value: Any) -> None:
    *parents, leaf = key.split(".")
    node = data
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise UsageError(f"Cannot set {key}: {part} is not a table.")
    node[leaf] = value


def load_config(path: PathType | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Build a configuration from an optional TOML file and flag overrides.

    Args:
        path: TOML file with the same keys as :class:`ExperimentConfig`.
        overrides: Dotted keys (``"system.n"``, ``"validation.samples"``)
            taking precedence over the file. ``None`` values are ignored.

    Raises:
        UsageError: If the file cannot be parsed or the result is invalid.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with Path(path).open("rb") as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"Cannot read configuration {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, key, value)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise UsageError(f"Invalid configuration:\n{exc}") from exc
    except SafeLQRError as exc:
        raise UsageError(str(exc)) from exc
