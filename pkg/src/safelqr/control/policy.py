"""Control policies with internal SafeSteps state.

Every policy works on batches: ``x`` has shape ``(N, n)``, the SafeSteps
counter ``xi`` has shape ``(N,)`` and the exploration draw ``zeta`` has shape
``(N, p)``. The applied input is always ``u = u_tilde + scale * zeta``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from safelqr.errors import InvalidArgumentError


class PolicyDecision(NamedTuple):
    """Inputs chosen at one step together with the next SafeSteps value."""

    u: np.ndarray
    u_tilde: np.ndarray
    zeta: np.ndarray
    xi: np.ndarray
    scale: float


def check_beta(beta: float, sweep: bool = False) -> float:
    """Validate an exploration decay exponent.

    Args:
        beta: Decay exponent.
        sweep: Also accept the endpoints 0 and 1/2.

    Raises:
        InvalidArgumentError: If ``beta`` is outside ``(0, 1/2)`` (``[0, 1/2]``
            with ``sweep``).
    """
    ok = 0.0 <= beta <= 0.5 if sweep else 0.0 < beta < 0.5
    if not ok:
        bounds = "[0, 1/2]" if sweep else "(0, 1/2)"
        raise InvalidArgumentError(f"beta must lie in {bounds}, got {beta}")
    return float(beta)


def switch(
    x: np.ndarray, xi: np.ndarray, K: np.ndarray, K_norm: float, M: float, t: int, with_triggers: bool = False
):
    """Threshold switching rule shared by every safe policy.

    While ``xi > 0`` the exploitation input is zero and the counter decreases.
    Otherwise, if ``max(||K||, ||x||) >= M`` a non-action run of ``t`` steps
    starts (the current step included). Otherwise ``u_tilde = K x``.

    Returns:
        tuple: ``u_tilde`` of shape ``(N, p)`` and the next counter of shape
        ``(N,)``. With ``with_triggers`` a third boolean array of shape ``(N,)``
        marks the trajectories whose non-action run starts at this step.
    """
    waiting = xi > 0
    trigger = ~waiting & (np.maximum(K_norm, np.linalg.norm(x, axis=1)) >= M)
    act = ~(waiting | trigger)
    u_tilde = np.where(act[:, None], x @ K.T, 0.0)
    xi_next = np.where(waiting, xi - 1, np.where(trigger, t - 1, 0)).astype(np.int64)
    if with_triggers:
        return u_tilde, xi_next, trigger
    return u_tilde, xi_next


class Policy(ABC, BaseModel):
    """Abstract batched policy.

    Subclasses implement :meth:`exploit`; the exploration scale defaults to a
    constant ``noise``.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    noise: float = Field(0.0, ge=0.0, description="Constant exploration scale.")

    @abstractmethod
    def exploit(self, x: np.ndarray, xi: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(u_tilde, xi_next)`` for a batch of states at step ``k``."""
        raise NotImplementedError

    def noise_scale(self, k: int) -> float:
        return self.noise

    def decide(self, x: np.ndarray, xi: np.ndarray, k: int, zeta: np.ndarray) -> PolicyDecision:
        u_tilde, xi_next = self.exploit(x, xi, k)
        scale = self.noise_scale(k)
        return PolicyDecision(u_tilde + scale * zeta, u_tilde, zeta, xi_next, scale)


def _as_gain(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim == 0:
        K = K.reshape(1, 1)
    if K.ndim != 2 or not np.all(np.isfinite(K)):
        raise ValueError(f"gain must be a finite matrix, got shape {K.shape}")
    K.setflags(write=False)
    return K


class ZeroPolicy(Policy):
    """Open loop: ``u = noise * zeta``."""

    p: int = Field(..., ge=1, description="Input dimension.")

    def exploit(self, x, xi, k):
        return np.zeros((x.shape[0], self.p)), np.zeros_like(xi)


class GainPolicy(Policy):
    """Policy built around a fixed feedback gain ``K``."""

    K: np.ndarray = Field(..., description="Feedback gain, p x n.")

    @field_validator("K", mode="before")
    @classmethod
    def _check_gain(cls, value):
        return _as_gain(value)


class LinearPolicy(GainPolicy):
    """Linear feedback ``u = K x`` plus optional exploration.

    With ``beta`` set the exploration scale decays as ``max(k, 1)^(-beta)``,
    the certainty-equivalence baseline; otherwise it is the constant ``noise``.
    """

    beta: float | None = Field(None, description="Decay exponent of the exploration scale.")

    def exploit(self, x, xi, k):
        return x @ self.K.T, np.zeros_like(xi)

    def noise_scale(self, k: int) -> float:
        if self.beta is None:
            return self.noise
        return max(k, 1) ** (-self.beta)

    def __call__(self, x) -> np.ndarray:
        return self.K @ np.asarray(x, dtype=float)


def linear_policy(K, beta: float | None = None) -> LinearPolicy:
    """``u = K x``; with ``beta`` adds the ``k^(-beta) zeta`` exploration term."""
    return LinearPolicy(K=K, beta=beta)


class SwitchingPolicy(GainPolicy):
    """Fixed-threshold switching feedback.

    Applies ``u_tilde = K x`` unless ``max(||K||, ||x||) >= M``, in which case
    the exploitation input is switched off for ``t`` consecutive steps.
    """

    M: float = Field(..., gt=0.0, description="Norm threshold.")
    t: int = Field(..., ge=1, description="Length of a non-action run.")

    def exploit(self, x, xi, k):
        return switch(x, xi, self.K, float(np.linalg.norm(self.K, 2)), self.M, self.t)


def safe_threshold(k: int) -> tuple[float, int]:
    """Threshold ``ln k`` and run length ``floor(ln k) + 1`` at step ``k >= 1``."""
    log_k = math.log(k)
    return log_k, int(math.floor(log_k)) + 1


class SafePolicy(GainPolicy):
    """Safe switching policy with growing threshold.

    At step ``k`` this is :class:`SwitchingPolicy` with ``M = ln k`` and
    ``t = floor(ln k) + 1``, and exploration scale ``(k+1)^(-beta)``. Steps
    below 1 are evaluated as step 1.
    """

    beta: float = Field(..., description="Exploration decay exponent.")

    def exploit(self, x, xi, k):
        M, t = safe_threshold(max(k, 1))
        return switch(x, xi, self.K, float(np.linalg.norm(self.K, 2)), M, t)

    def noise_scale(self, k: int) -> float:
        return (k + 1) ** (-self.beta)


def safe_policy_step(x, xi: int, k: int, K, beta: float, rng: np.random.Generator) -> PolicyDecision:
    """One decision of the safe switching policy for a single state.

    Args:
        x: State, shape ``(n,)``.
        xi: SafeSteps counter.
        k: Step index, ``k >= 1``.
        K: Gain in effect.
        beta: Exploration decay, in ``(0, 1/2)``.
        rng: Source of ``zeta ~ N(0, I_p)``.

    Returns:
        PolicyDecision: Unbatched ``u``, ``u_tilde``, ``zeta`` and next ``xi``.
    """
    check_beta(beta)
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if xi < 0:
        raise InvalidArgumentError(f"SafeSteps counter must be >= 0, got {xi}")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    x = np.asarray(x, dtype=float)
    if x.shape != (K.shape[1],):
        raise InvalidArgumentError(f"x must have shape ({K.shape[1]},), got {x.shape}")
    M, t = safe_threshold(k)
    u_tilde, xi_next = switch(x[None, :], np.array([xi]), K, float(np.linalg.norm(K, 2)), M, t)
    zeta = rng.standard_normal(K.shape[0])
    scale = (k + 1) ** (-beta)
    return PolicyDecision(u_tilde[0] + scale * zeta, u_tilde[0], zeta, int(xi_next[0]), scale)


def warmup_input(k: int, beta: float, p: int, rng: np.random.Generator) -> PolicyDecision:
    """Pure exploration ``u = (k+1)^(-beta) zeta`` used before the first estimate."""
    if k < 0:
        raise InvalidArgumentError(f"k must be >= 0, got {k}")
    zeta = rng.standard_normal(p)
    scale = (k + 1) ** (-beta)
    return PolicyDecision(scale * zeta, np.zeros(p), zeta, 0, scale)
