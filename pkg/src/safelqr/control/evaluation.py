"""Cost evaluation, rate fitting and Monte-Carlo checks of the analytic bounds."""

from __future__ import annotations

import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from safelqr.control.algebra import (
    lyap_norm_bound,
    policy_cost,
    policy_value_matrix,
    riccati_sensitivity_bound,
    solve_dare,
    solve_dlyap,
)
from safelqr.control.bounds import (
    escape_bound,
    fourth_moment_bound,
    lyapunov_certificate,
    make_certificate,
    switching_gap_terms,
)
from safelqr.control.policy import LinearPolicy, Policy, SwitchingPolicy, ZeroPolicy
from safelqr.control.system import LinearSystem, random_stable_system, rollout
from safelqr.errors import InvalidArgumentError, UnstableArgumentError

logger = logging.getLogger(__name__)


def empirical_cost(sys: LinearSystem, policy: Policy, T: int = 10_000, N: int = 10, rng: np.random.Generator | None = None) -> float:
    """Average stage cost ``x'Qx + u'Ru`` over ``N`` independent ``T``-step rollouts.

    Returns ``inf`` when any rollout diverges.
    """
    rng = np.random.default_rng() if rng is None else rng
    return rollout(sys, policy, T, N, rng).mean_cost


class CostReport(BaseModel):
    """Analytic, empirical and optimal cost of a linear gain."""

    J_analytic: float = Field(..., description="Tr(W P_K); inf for a destabilizing gain.")
    J_empirical: float = Field(..., description="Empirical average cost.")
    J_star: float = Field(..., description="Optimal cost Tr(W P*).")
    T: int = Field(..., description="Rollout length.")
    N: int = Field(..., description="Number of rollouts.")

    @property
    def analytic_gap(self) -> float:
        return self.J_analytic - self.J_star

    @property
    def relative_error(self) -> float:
        """``|J_empirical - J_analytic| / J_analytic``."""
        if not math.isfinite(self.J_analytic) or self.J_analytic == 0.0:
            return math.inf
        return abs(self.J_empirical - self.J_analytic) / self.J_analytic


def cost_report(sys: LinearSystem, K, T: int = 10_000, N: int = 10, rng: np.random.Generator | None = None) -> CostReport:
    """Compare the analytic and empirical cost of ``u = K x`` with the optimum."""
    try:
        J_analytic = policy_cost(sys, K)
    except UnstableArgumentError:
        J_analytic = math.inf
    solution = solve_dare(sys.A, sys.B, sys.Q, sys.R)
    return CostReport(
        J_analytic=J_analytic,
        J_empirical=empirical_cost(sys, LinearPolicy(K=K), T, N, rng),
        J_star=float(np.trace(sys.W @ solution.P)),
        T=T,
        N=N,
    )


def safe_policy_cost_bound(sys: LinearSystem, K, k: int) -> float:
    """Finite cost bound for the safe switching policy deployed at step ``k``.

    ``((ln k)^2 A^2 + ||W||) kappa(P) ||Q + K'RK|| / (1 - rho)`` with
    ``A = max(||A||, ||A + B K||)`` and ``(P, rho)`` the open-loop certificate.
    The bound is finite for every gain.
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    P, rho = lyapunov_certificate(sys.A)
    eigenvalues = np.linalg.eigvalsh(P)
    kappa = eigenvalues[-1] / eigenvalues[0]
    size = max(np.linalg.norm(sys.A, 2), np.linalg.norm(sys.A + sys.B @ K, 2))
    drive = math.log(k) ** 2 * size**2 + np.linalg.norm(sys.W, 2)
    return float(drive * kappa * np.linalg.norm(sys.Q + K.T @ sys.R @ K, 2) / (1.0 - rho))


class PowerLawFit(BaseModel):
    """Least-squares line through ``(ln k, ln value)``."""

    slope: float = Field(..., description="Fitted exponent.")
    intercept: float = Field(..., description="Fitted log-prefactor.")
    r2: float = Field(..., description="Coefficient of determination.")
    points: int = Field(..., description="Number of points used.")


def fit_power_law(curve) -> PowerLawFit:
    """Fit ``value ~ exp(intercept) * k^slope`` by ordinary least squares in log-log space.

    Args:
        curve: Iterable of ``(k, value)`` pairs with positive entries.

    Raises:
        InvalidArgumentError: If fewer than five points are given or any ``k``
            or value is not positive.
    """
    data = np.asarray(list(curve), dtype=float)
    if data.ndim != 2 or data.shape[0] < 5 or data.shape[1] != 2:
        raise InvalidArgumentError(f"fit_power_law needs at least 5 (k, value) pairs, got shape {data.shape}")
    if np.any(data <= 0.0) or not np.all(np.isfinite(data)):
        raise InvalidArgumentError("fit_power_law needs positive finite k and values.")
    log_k, log_v = np.log(data[:, 0]), np.log(data[:, 1])
    if np.ptp(log_v) == 0.0:
        return PowerLawFit(slope=0.0, intercept=float(log_v[0]), r2=1.0, points=len(data))
    result = stats.linregress(log_k, log_v)
    return PowerLawFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r2=float(result.rvalue**2),
        points=len(data),
    )


def rate_window(curve, k_min: float = 1e3, points_per_decade: int = 10) -> list[tuple[float, float]]:
    """Drop the burn-in ``k < k_min`` and keep about ``points_per_decade`` points per decade.

    Non-finite or nonpositive values are dropped as well.
    """
    data = [(float(k), float(v)) for k, v in curve if k >= k_min and math.isfinite(v) and v > 0.0]
    if not data:
        return []
    data.sort()
    kept: list[tuple[float, float]] = []
    last_bin = None
    for k, v in data:
        bin_index = math.floor(math.log10(k) * points_per_decade + 1e-9)
        if bin_index != last_bin:
            kept.append((k, v))
            last_bin = bin_index
    return kept


class OscillationTrace(BaseModel):
    """Noise-free trajectory of a two-mode switched system."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    states: np.ndarray = Field(..., description="States x_0..x_steps, shape (steps+1, n).")
    modes: np.ndarray = Field(..., description="Mode applied at each step, 0 or 1.")
    M: float = Field(..., description="Switching threshold.")
    t: int = Field(..., description="Length of a mode-0 run.")

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)


OSCILLATION_A0 = ((0.5, 2.0), (0.0, 0.5))
OSCILLATION_A1 = ((0.5, 0.0), (2.0, 0.5))
OSCILLATION_X0 = (0.1, 1.0)


def oscillation_demo(
    A0=OSCILLATION_A0,
    A1=OSCILLATION_A1,
    M: float = 1.0,
    t: int = 1,
    x0=OSCILLATION_X0,
    steps: int = 60,
) -> OscillationTrace:
    """Switch between two stable matrices by a norm threshold.

    If ``||x_k|| >= M`` mode ``A0`` is applied for ``t`` consecutive steps,
    otherwise ``A1``. Both matrices are stable, yet the switched system can
    oscillate for short runs ``t``.
    """
    if t < 1:
        raise InvalidArgumentError(f"t must be >= 1, got {t}")
    A0 = np.asarray(A0, dtype=float)
    A1 = np.asarray(A1, dtype=float)
    states = np.zeros((steps + 1, A0.shape[0]))
    states[0] = np.asarray(x0, dtype=float)
    modes = np.zeros(steps, dtype=np.int64)
    remaining = 0
    for k in range(steps):
        x = states[k]
        if remaining == 0 and np.linalg.norm(x) >= M:
            remaining = t
        if remaining > 0:
            remaining -= 1
            states[k + 1] = A0 @ x
        else:
            modes[k] = 1
            states[k + 1] = A1 @ x
    return OscillationTrace(states=states, modes=modes, M=M, t=t)


class BoundCheck(BaseModel):
    """Outcome of comparing one analytic bound with its measured counterpart."""

    name: str = Field(..., description="Check identifier.")
    formula_value: float = Field(..., description="Value of the analytic bound.")
    empirical_value: float | None = Field(None, description="Measured quantity; None when skipped.")
    samples: int = Field(0, description="Monte-Carlo samples used.")
    status: Literal["pass", "fail", "skipped"] = Field(..., description="Result of the one-sided check.")
    detail: str = Field("", description="Human readable context.")


class ValidationSettings(BaseModel):
    """Sample sizes and grids of the bound validation suite."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    samples: int = Field(100_000, ge=1, description="Replicates of the escape-probability check.")
    moment_samples: int = Field(10_000, ge=1, description="Replicates of the fourth-moment check.")
    gap_T: int = Field(100_000, ge=1, description="Rollout length of the switching-gap check.")
    gap_N: int = Field(20, ge=1, description="Rollouts of the switching-gap check.")
    escape_levels: list[float] = Field([7.0, 8.0, 10.0], description="Thresholds M of the escape check.")
    escape_steps: int = Field(200, ge=1, description="Step at which the escape probability is measured.")
    moment_steps: int = Field(500, ge=1, description="Step at which the fourth moment is measured.")
    gap_levels: list[float] = Field([20.0, 40.0, 80.0], description="Thresholds of the gap monotonicity check.")
    min_samples: int = Field(1_000, ge=1, description="Below this many samples Monte-Carlo comparisons are skipped.")
    seed: int = Field(0, description="Seed of every Monte-Carlo stream.")

    @property
    def reduced(self) -> bool:
        return self.samples < self.min_samples


def validation_system() -> LinearSystem:
    """Two-state plant with symmetric ``A`` and ``B = I`` used by the switched-system checks.

    ``A`` and ``A + B K*`` are then simultaneously certified by ``P = I``.
    """
    return LinearSystem.from_arrays(A=[[0.5, 0.1], [0.1, 0.4]], B=np.eye(2))


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _check_escape(settings: ValidationSettings, rng: np.random.Generator) -> list[BoundCheck]:
    scalar = LinearSystem.from_arrays(A=[[0.5]], B=[[1.0]])
    checks = []
    values = []
    final = None
    if not settings.reduced:
        final = rollout(scalar, ZeroPolicy(p=1), settings.escape_steps, settings.samples, rng).final_states
    for M in settings.escape_levels:
        bound = escape_bound(make_certificate(scalar, M))
        values.append(bound)
        if final is None:
            checks.append(BoundCheck(name=f"escape[M={M:g}]", formula_value=bound, status="skipped"))
            continue
        frequency = float(np.mean(np.linalg.norm(final, axis=1) >= M))
        checks.append(
            BoundCheck(
                name=f"escape[M={M:g}]",
                formula_value=bound,
                empirical_value=frequency,
                samples=settings.samples,
                status=_status(frequency <= bound),
            )
        )
    monotone = all(a > b for a, b in zip(values, values[1:]))
    checks.append(
        BoundCheck(
            name="escape[monotone]",
            formula_value=values[-1],
            status=_status(monotone),
            detail="escape bound strictly decreasing in M",
        )
    )
    return checks


def _check_fourth_moment(settings: ValidationSettings, rng: np.random.Generator) -> list[BoundCheck]:
    sys = validation_system()
    K = solve_dare(sys.A, sys.B, sys.Q, sys.R).K
    M, t = 5.0, 3
    bound = fourth_moment_bound(make_certificate(sys, M, t, K=K))
    larger = fourth_moment_bound(make_certificate(sys, 2 * M, t, K=K))
    checks = [
        BoundCheck(
            name="fourth_moment[monotone]",
            formula_value=bound,
            status=_status(larger > bound),
            detail="fourth-moment bound increasing in M",
        )
    ]
    if settings.reduced:
        checks.append(BoundCheck(name="fourth_moment", formula_value=bound, status="skipped"))
        return checks
    policy = SwitchingPolicy(K=K, M=M, t=t)
    final = rollout(sys, policy, settings.moment_steps, settings.moment_samples, rng).final_states
    moment = float(np.mean(np.sum(final**2, axis=1) ** 2))
    checks.append(
        BoundCheck(
            name="fourth_moment",
            formula_value=bound,
            empirical_value=moment,
            samples=settings.moment_samples,
            status=_status(moment <= bound),
        )
    )
    return checks


def _check_switching_gap(settings: ValidationSettings, rng: np.random.Generator) -> list[BoundCheck]:
    sys = validation_system()
    K = solve_dare(sys.A, sys.B, sys.Q, sys.R).K
    checks = []
    values = [switching_gap_terms(make_certificate(sys, M, 3, K=K), K, sys).bound for M in settings.gap_levels]
    checks.append(
        BoundCheck(
            name="switching_gap[monotone]",
            formula_value=values[-1],
            status=_status(all(a > b for a, b in zip(values, values[1:]))),
            detail="gap bound strictly decreasing in M past the knee",
        )
    )
    M, t = 6.0, 3
    bound = switching_gap_terms(make_certificate(sys, M, t, K=K), K, sys).bound
    if settings.reduced:
        checks.append(BoundCheck(name="switching_gap", formula_value=bound, status="skipped"))
        return checks
    # Common random numbers: both rollouts see identical noise.
    seed = int(rng.integers(2**63))
    switching = empirical_cost(sys, SwitchingPolicy(K=K, M=M, t=t), settings.gap_T, settings.gap_N, np.random.default_rng(seed))
    linear = empirical_cost(sys, LinearPolicy(K=K), settings.gap_T, settings.gap_N, np.random.default_rng(seed))
    gap = switching - linear
    checks.append(
        BoundCheck(
            name="switching_gap",
            formula_value=bound,
            empirical_value=gap,
            samples=settings.gap_T * settings.gap_N,
            status=_status(gap <= bound),
            detail=f"linear policy analytic cost {policy_cost(sys, K):.6g}",
        )
    )
    return checks


def _check_riccati(rng: np.random.Generator) -> list[BoundCheck]:
    sys = validation_system()
    solution = solve_dare(sys.A, sys.B, sys.Q, sys.R)
    weight = sys.R + sys.B.T @ solution.P @ sys.B
    direction = rng.standard_normal(solution.K.shape)
    direction /= np.linalg.norm(direction, "fro")
    checks = []
    ratios = []
    for delta in (1e-1, 1e-2, 1e-3):
        K_hat = solution.K + delta * direction
        actual = float(np.linalg.norm(policy_value_matrix(sys, K_hat) - solution.P, "fro"))
        bound = riccati_sensitivity_bound(sys.A + sys.B @ K_hat, weight, K_hat - solution.K)
        ratios.append(actual / delta**2)
        checks.append(
            BoundCheck(name=f"riccati[delta={delta:g}]", formula_value=bound, empirical_value=actual, status=_status(actual <= bound))
        )
    spread = max(ratios) / min(ratios)
    checks.append(
        BoundCheck(
            name="riccati[quadratic]",
            formula_value=2.0,
            empirical_value=spread,
            status=_status(spread <= 2.0),
            detail="max/min of ||dP|| / delta^2",
        )
    )
    return checks


def _check_lyapunov(rng: np.random.Generator, count: int = 20) -> list[BoundCheck]:
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(2, 6))
        A = random_stable_system(n, 1, float(rng.uniform(0.1, 0.95)), rng).A
        Qm = np.eye(n) + np.diag(rng.uniform(0.0, 1.0, n))
        ratio = np.linalg.norm(solve_dlyap(A, Qm), "fro") / lyap_norm_bound(A, Qm)
        worst = max(worst, float(ratio))
    return [
        BoundCheck(
            name="lyapunov_norm",
            formula_value=1.0,
            empirical_value=worst,
            samples=count,
            status=_status(worst <= 1.0 + 1e-12),
            detail="largest ||X||_F / bound over random stable systems",
        )
    ]


def validate_bounds(settings: ValidationSettings | None = None) -> list[BoundCheck]:
    """Run every bound check.

    Checks needing many samples are marked ``skipped`` when
    ``settings.samples < settings.min_samples``; formula-level checks always run.

    Raises:
        BoundValidityError: If a configured escape level lies below the
            validity floor of the escape bound.
    """
    settings = ValidationSettings() if settings is None else settings
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(settings.seed).spawn(5)]
    checks = (
        _check_escape(settings, streams[0])
        + _check_fourth_moment(settings, streams[1])
        + _check_switching_gap(settings, streams[2])
        + _check_riccati(streams[3])
        + _check_lyapunov(streams[4])
    )
    for check in checks:
        logger.debug("%s: %s (bound %.6g, measured %s)", check.name, check.status, check.formula_value, check.empirical_value)
    return checks
