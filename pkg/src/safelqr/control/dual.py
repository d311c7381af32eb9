"""Dual control: identify the plant while controlling it.

:func:`run_safe` runs the safe scheme:

1. pure exploration for the warm-up steps,
2. recursive Markov-parameter estimation at every step,
3. reconstruction of ``(A_hat, B_hat)`` and a certainty-equivalent LQR gain at
   the scheduled update steps,
4. the safe switching policy with the current gain otherwise.

:func:`run_certainty_equivalence` runs the naive baseline that applies the
estimated gain without the switching guard.
"""

from __future__ import annotations

import logging
import math
import time
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from safelqr.control.algebra import noisy_policy_cost, policy_cost, solve_dare
from safelqr.control.evaluation import empirical_cost, safe_policy_cost_bound
from safelqr.control.markov import MarkovEstimator
from safelqr.control.policy import LinearPolicy, SwitchingPolicy, check_beta, safe_threshold, switch
from safelqr.control.reconstruction import ProbeBattery, Reconstruction, reconstruct
from safelqr.control.system import (
    DIVERGENCE_THRESHOLD,
    NOISE_CHUNK,
    GaussianSampler,
    LinearSystem,
    TrajectoryRecord,
    true_markov,
)
from safelqr.errors import DivergedError, InvalidArgumentError, SafeLQRError, UnstableArgumentError

logger = logging.getLogger(__name__)

MAX_PROBES_PER_DECADE = 128
GAIN_DARE_ITERATIONS = 20_000


def schedule_points(total_steps: int, start: int = 1) -> list[int]:
    """Steps ``floor(10^(j/2))`` with ``start <= k <= total_steps``."""
    points = []
    j = 0
    while True:
        k = 10 ** (j // 2) if j % 2 == 0 else math.isqrt(10**j)
        if k > total_steps:
            return points
        if k >= start and (not points or k > points[-1]):
            points.append(k)
        j += 1


def snapshot_points(total_steps: int, start: int, per_decade: int, schedule=()) -> list[int]:
    """Log-spaced probe steps merged with the schedule and the final step."""
    points = {total_steps}
    points.update(k for k in schedule if start <= k <= total_steps)
    if per_decade > 0:
        j = 0
        while True:
            k = int(round(10 ** (j / per_decade)))
            if k > total_steps:
                break
            if k >= start:
                points.add(k)
            j += 1
    return sorted(k for k in points if k >= start)


class DualControlConfig(BaseModel):
    """Options of one dual-control run."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True, arbitrary_types_allowed=True)

    beta: float = Field(0.25, description="Exploration decay exponent, in (0, 1/2).")
    total_steps: int = Field(..., ge=1, description="Number of control steps.")
    schedule: list[int] | None = Field(
        None, description="Gain-update steps; defaults to floor(10^(j/2))."
    )
    n_probes: int = Field(50, ge=1, description="Virtual trajectories used by the reconstruction.")
    seed: int = Field(0, description="Seed of the run's random streams.")
    record_stride: int = Field(1, ge=1, description="Store every record_stride-th step of the trajectory.")
    full_record: bool = Field(False, description="Store full state and input vectors in the trajectory.")
    sweep: bool = Field(False, description="Allow beta = 0 and beta = 1/2.")
    warmup_steps: int | None = Field(None, description="Pure exploration steps; defaults to n + p.")
    frozen_gain: list[list[float]] | None = Field(
        None, description="Gain applied after warm-up instead of the estimated one."
    )
    probes_per_decade: int = Field(8, ge=0, le=MAX_PROBES_PER_DECADE, description="Log-spaced snapshots per decade.")
    policy_eval_T: int = Field(0, ge=0, description="Rollout length of the deployed-policy cost estimate; 0 disables it.")
    policy_eval_N: int = Field(10, ge=1, description="Rollouts of the deployed-policy cost estimate.")

    @model_validator(mode="after")
    def _check_beta(self):
        check_beta(self.beta, sweep=self.sweep)
        return self

    @field_validator("schedule")
    @classmethod
    def _check_schedule(cls, value):
        if value is not None:
            if any(k < 1 for k in value) or any(b <= a for a, b in zip(value, value[1:])):
                raise ValueError("schedule must be strictly increasing positive steps")
        return value

    def warmup(self, n: int, p: int) -> int:
        warmup = n + p if self.warmup_steps is None else self.warmup_steps
        if warmup < n + p:
            raise InvalidArgumentError(f"warmup_steps must be >= n + p = {n + p}, got {warmup}")
        if self.total_steps < warmup:
            raise InvalidArgumentError(f"total_steps must be >= {warmup}, got {self.total_steps}")
        return warmup

    def update_steps(self, n: int, p: int) -> list[int]:
        start = self.warmup(n, p)
        points = schedule_points(self.total_steps) if self.schedule is None else self.schedule
        return [k for k in points if start <= k <= self.total_steps]


class FallbackEvent(BaseModel):
    """A gain update that fell back to ``K_hat = 0``."""

    k: int = Field(..., description="Step of the failed update.")
    reason: str = Field(..., description="Error that triggered the fallback.")


class GainUpdate(BaseModel):
    """Result of one reconstruction and gain synthesis."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    K: np.ndarray = Field(..., description="Gain to deploy.")
    A: np.ndarray | None = Field(None, description="Reconstructed A, None if reconstruction failed.")
    B: np.ndarray | None = Field(None, description="Reconstructed B, None if reconstruction failed.")
    fallback: str | None = Field(None, description="Failure reason when K fell back to 0.")


def update_gain(H, Q, R, battery: ProbeBattery) -> GainUpdate:
    """Reconstruct ``(A_hat, B_hat)`` from ``H`` and solve the estimated DARE.

    Any failure yields ``K = 0`` with the reason recorded instead of an
    exception.
    """
    n, p = np.shape(H[0])
    A_hat = B_hat = None
    try:
        estimate = reconstruct(H, battery=battery)
        A_hat, B_hat = estimate.A, estimate.B
        solution = solve_dare(A_hat, B_hat, Q, R, max_iter=GAIN_DARE_ITERATIONS)
    except (SafeLQRError, np.linalg.LinAlgError) as exc:
        return GainUpdate(K=np.zeros((p, n)), A=A_hat, B=B_hat, fallback=f"{type(exc).__name__}: {exc}")
    return GainUpdate(K=solution.K, A=A_hat, B=B_hat)


class ControllerState(BaseModel):
    """Mutable state of the controller during one run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    K: np.ndarray = Field(..., description="Gain in effect.")
    gain_id: int = Field(0, description="Number of gain updates so far.")
    safe_steps: int = Field(0, description="SafeSteps counter.")
    estimator: MarkovEstimator = Field(..., description="Markov-parameter estimator.")
    A_hat: np.ndarray | None = Field(None, description="Latest reconstructed A.")
    B_hat: np.ndarray | None = Field(None, description="Latest reconstructed B.")
    fallbacks: list[FallbackEvent] = Field(default_factory=list, description="Failed gain updates.")


class Snapshot(BaseModel):
    """Estimation and cost diagnostics at one step."""

    k: int
    gain_id: int
    A_err: float = Field(..., description="||A_hat - A||_2.")
    B_err: float = Field(..., description="||B_hat - B||_2.")
    H_err: list[float] = Field(..., description="||H_hat_tau - H_tau||_F per tau.")
    K_err: float | None = Field(None, description="||K_hat - K*||_2.")
    gain_cost: float = Field(..., description="Cost of u = K_hat x; inf if destabilizing.")
    deployed_cost: float = Field(..., description="Cost of u = K_hat x plus the current exploration noise.")
    empirical_cost: float | None = Field(None, description="Empirical cost of the deployed policy.")
    cost_bound: float | None = Field(None, description="Finite cost bound of the deployed safe policy.")


class DualRunSummary(BaseModel):
    """Scalar outcome of one dual-control run."""

    scheme: Literal["safe", "ce"]
    beta: float
    seed: int
    steps_completed: int
    diverged: bool = False
    diverged_step: int | None = None
    gain_updates: int = 0
    fallback_events: int = 0
    triggers: int = Field(0, description="Number of threshold-triggered non-action runs.")
    max_state_norm: float = 0.0
    max_exploit_ratio: float = Field(0.0, description="max ||u_tilde_k|| / (ln k)^2 over main steps.")
    final_A_err: float | None = None
    final_B_err: float | None = None
    final_K_err: float | None = None
    final_gain_cost: float | None = None
    J_star: float | None = None
    open_loop_cost: float | None = None
    elapsed: float = Field(0.0, description="Wall-clock seconds.")


class DualRun(BaseModel):
    """Everything produced by one run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    summary: DualRunSummary
    snapshots: list[Snapshot]
    fallbacks: list[FallbackEvent]
    record: TrajectoryRecord
    final_K: np.ndarray


def _safe_cost(fn, *args) -> float:
    try:
        return fn(*args)
    except UnstableArgumentError:
        return math.inf


def _take_snapshot(
    sys: LinearSystem,
    config: DualControlConfig,
    scheme: str,
    k: int,
    state: ControllerState,
    H_hat: list[np.ndarray],
    H_true: list[np.ndarray],
    recon: Reconstruction,
    K_star: np.ndarray | None,
    eval_rng: np.random.Generator,
) -> Snapshot:
    K = state.K
    if scheme == "safe":
        scale = (k + 1) ** (-config.beta)
        M, t = safe_threshold(k)
        deployed = SwitchingPolicy(K=K, M=M, t=t, noise=scale)
        cost_bound = safe_policy_cost_bound(sys, K, k)
    else:
        scale = k ** (-config.beta)
        deployed = LinearPolicy(K=K, noise=scale)
        cost_bound = None
    empirical = None
    if config.policy_eval_T > 0:
        empirical = empirical_cost(sys, deployed, config.policy_eval_T, config.policy_eval_N, eval_rng)
    return Snapshot(
        k=k,
        gain_id=state.gain_id,
        A_err=float(np.linalg.norm(recon.A - sys.A, 2)),
        B_err=float(np.linalg.norm(recon.B - sys.B, 2)),
        H_err=[float(np.linalg.norm(h - h0, "fro")) for h, h0 in zip(H_hat, H_true)],
        K_err=None if K_star is None else float(np.linalg.norm(K - K_star, 2)),
        gain_cost=_safe_cost(policy_cost, sys, K),
        deployed_cost=_safe_cost(noisy_policy_cost, sys, K, scale**2),
        empirical_cost=empirical,
        cost_bound=cost_bound,
    )


def _run(sys: LinearSystem, config: DualControlConfig, scheme: str) -> DualRun:
    started = time.perf_counter()
    sys.require_stable()
    n, p = sys.n, sys.p
    m = n + p
    beta = config.beta
    warmup = config.warmup(n, p)
    updates = set(config.update_steps(n, p))
    snapshots_at = set(snapshot_points(config.total_steps, warmup, config.probes_per_decade, sorted(updates)))

    plant_seq, explore_seq, probe_seq, eval_seq = np.random.SeedSequence(config.seed).spawn(4)
    plant_rng = np.random.default_rng(plant_seq)
    explore_rng = np.random.default_rng(explore_seq)
    eval_rng = np.random.default_rng(eval_seq)
    battery = ProbeBattery.draw(config.n_probes, m, p, np.random.default_rng(probe_seq))

    try:
        optimal = solve_dare(sys.A, sys.B, sys.Q, sys.R)
        K_star, J_star = optimal.K, float(np.trace(sys.W @ optimal.P))
    except SafeLQRError:
        K_star, J_star = None, None
    H_true = true_markov(sys, m)
    frozen = None if config.frozen_gain is None else np.asarray(config.frozen_gain, dtype=float)
    if frozen is not None and frozen.shape != (p, n):
        raise InvalidArgumentError(f"frozen_gain must have shape {(p, n)}, got {frozen.shape}")

    state = ControllerState(K=np.zeros((p, n)), estimator=MarkovEstimator(n, p, beta))
    record = TrajectoryRecord.allocate(n, p, config.total_steps, config.record_stride, config.full_record)
    summary = DualRunSummary(scheme=scheme, beta=beta, seed=config.seed, steps_completed=0, J_star=J_star)
    summary.open_loop_cost = _safe_cost(policy_cost, sys, np.zeros((p, n)))
    snapshots: list[Snapshot] = []

    noise = GaussianSampler(sys.W)
    A, B = sys.A, sys.B
    K = state.K
    K_norm = 0.0
    xi = 0
    x = GaussianSampler(sys.X0).draw(plant_rng)
    zeta_prev = u_tilde_prev = None
    scale_prev = 1.0
    zetas = ws = None

    for k in range(config.total_steps + 1):
        if k > 0:
            state.estimator.ingest(x, zeta_prev, u_tilde_prev, scale_prev)
        norm_x = float(np.linalg.norm(x))
        if not math.isfinite(norm_x) or norm_x > DIVERGENCE_THRESHOLD:
            if scheme == "safe":
                raise DivergedError(k, norm_x)
            logger.info("Certainty-equivalence run diverged at step %d (seed %d)", k, config.seed)
            summary.diverged, summary.diverged_step = True, k
            break
        summary.max_state_norm = max(summary.max_state_norm, norm_x)
        summary.steps_completed = k

        gain_changed = False
        if frozen is not None and k == warmup:
            state.K, gain_changed = frozen, True
        if k in updates or k in snapshots_at:
            H_hat = state.estimator.estimate_all()
            if k in updates:
                update = update_gain(H_hat, sys.Q, sys.R, battery)
                state.gain_id += 1
                state.A_hat, state.B_hat = update.A, update.B
                if update.fallback is not None:
                    state.fallbacks.append(FallbackEvent(k=k, reason=update.fallback))
                    logger.warning("Gain update at step %d fell back to K = 0 (%s)", k, update.fallback)
                else:
                    logger.debug("Gain update %d at step %d", state.gain_id, k)
                if frozen is None:
                    state.K, gain_changed = update.K, True
            if k in snapshots_at:
                recon = reconstruct(H_hat, battery=battery)
                snapshots.append(
                    _take_snapshot(sys, config, scheme, k, state, H_hat, H_true, recon, K_star, eval_rng)
                )
        if gain_changed:
            K = state.K
            K_norm = float(np.linalg.norm(K, 2))

        if k == config.total_steps:
            break

        j = k % NOISE_CHUNK
        if j == 0:
            chunk = min(NOISE_CHUNK, config.total_steps - k)
            zetas = explore_rng.standard_normal((chunk, p))
            ws = noise.draw(plant_rng, chunk)
        zeta = zetas[j]

        safe_steps = xi
        if k < warmup:
            u_tilde = np.zeros(p)
            scale = (k + 1) ** (-beta)
        elif scheme == "ce":
            u_tilde = K @ x
            scale = k ** (-beta)
        else:
            scale = (k + 1) ** (-beta)
            M, t = safe_threshold(k)
            u_batch, xi_batch, triggered = switch(x[None, :], np.array([xi]), K, K_norm, M, t, with_triggers=True)
            u_tilde, xi = u_batch[0], int(xi_batch[0])
            if triggered[0]:
                summary.triggers += 1
            elif safe_steps == 0:
                summary.max_exploit_ratio = max(
                    summary.max_exploit_ratio, float(np.linalg.norm(u_tilde)) / M**2
                )
        u = u_tilde + scale * zeta
        record.append(k, x, u, u_tilde, zeta, safe_steps, state.gain_id, scale)
        zeta_prev, u_tilde_prev, scale_prev = zeta, u_tilde, scale
        x = A @ x + B @ u + ws[j]

    state.safe_steps = xi
    if snapshots:
        last = snapshots[-1]
        summary.final_A_err, summary.final_B_err = last.A_err, last.B_err
        summary.final_K_err, summary.final_gain_cost = last.K_err, last.gain_cost
    summary.gain_updates = state.gain_id
    summary.fallback_events = len(state.fallbacks)
    summary.elapsed = time.perf_counter() - started
    return DualRun(
        summary=summary,
        snapshots=snapshots,
        fallbacks=state.fallbacks,
        record=record.trimmed(),
        final_K=np.array(state.K),
    )


def run_safe(sys: LinearSystem, config: DualControlConfig) -> DualRun:
    """Run the safe dual-control scheme.

    Raises:
        UnstableArgumentError: If the plant is not open-loop stable.
        DivergedError: If ``||x_k||`` ever exceeds ``1e12``.
    """
    return _run(sys, config, "safe")


def run_certainty_equivalence(sys: LinearSystem, config: DualControlConfig) -> DualRun:
    """Run the naive baseline ``u_k = K_hat x_k + k^(-beta) zeta_k``.

    Divergence ends the run and is reported in the summary.
    """
    return _run(sys, config, "ce")
