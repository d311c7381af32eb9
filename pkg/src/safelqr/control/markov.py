"""Online cross-correlation estimates of Markov parameters.

The estimate of ``H_tau = A^tau B`` at step ``k`` is

    H_hat_tau = 1/(k - tau) * sum_{i=tau+1..k} w_{i,tau}
                * (x_i - sum_{t<tau} H_hat_t u_tilde_{i-t-1}) zeta_{i-tau-1}'

with ``w_{i,tau}`` the reciprocal of the exploration scale that multiplied
``zeta_{i-tau-1}`` (``(i - tau)^beta`` for the safe scheme). Because
``H_hat_t`` does not depend on ``i``, the sum splits into running sums
``S_xz[tau]`` and ``S_uz[tau, t]`` that :class:`MarkovEstimator` updates in
constant time per step.
"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from safelqr.errors import InvalidArgumentError, UnavailableEstimateError


class MarkovEstimator:
    """Recursive Markov-parameter estimator for one trajectory.

    Args:
        n: State dimension.
        p: Input dimension.
        beta: Exploration decay; weights default to ``(i - tau)^beta``.
        horizon: Number of Markov parameters ``m`` (default ``n + p``).
    """

    def __init__(self, n: int, p: int, beta: float, horizon: int | None = None):
        if n < 1 or p < 1:
            raise InvalidArgumentError(f"n and p must be >= 1, got n={n}, p={p}")
        self.n = n
        self.p = p
        self.beta = float(beta)
        self.m = n + p if horizon is None else int(horizon)
        if self.m < 1:
            raise InvalidArgumentError(f"horizon must be >= 1, got {self.m}")
        m = self.m
        self.k = 0
        # zeta[j], u_tilde[j], weight[j] hold the values from step k - 1 - j.
        self._zeta = np.zeros((m, p))
        self._u_tilde = np.zeros((m, p))
        self._weight = np.zeros(m)
        self.S_xz = np.zeros((m, n, p))
        self.S_uz = np.zeros((m, m, p, p))
        self._lower = np.tril(np.ones((m, m), dtype=bool), k=-1)

    @property
    def counts(self) -> np.ndarray:
        """Number of summands ``max(k - tau, 0)`` per ``tau``."""
        return np.maximum(self.k - np.arange(self.m), 0)

    def ingest(self, x, zeta, u_tilde, scale: float | None = None) -> "MarkovEstimator":
        """Add the state ``x_i`` reached after the inputs of step ``i - 1``.

        Args:
            x: New state ``x_i``, shape ``(n,)``.
            zeta: Exploration draw ``zeta_{i-1}``, shape ``(p,)``.
            u_tilde: Exploitation input ``u_tilde_{i-1}``, shape ``(p,)``.
            scale: Exploration scale used with ``zeta_{i-1}``. Defaults to
                ``i^(-beta)``.

        Raises:
            InvalidArgumentError: On dimension mismatch or a nonpositive scale.
        """
        x = np.asarray(x, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        u_tilde = np.asarray(u_tilde, dtype=float)
        if x.shape != (self.n,) or zeta.shape != (self.p,) or u_tilde.shape != (self.p,):
            raise InvalidArgumentError(
                f"Expected x ({self.n},), zeta and u_tilde ({self.p},); "
                f"got {x.shape}, {zeta.shape}, {u_tilde.shape}."
            )
        i = self.k + 1
        if scale is None:
            weight = float(i) ** self.beta
        elif scale > 0.0:
            weight = 1.0 / scale
        else:
            raise InvalidArgumentError(f"Exploration scale must be positive, got {scale}")

        self._zeta[1:] = self._zeta[:-1]
        self._u_tilde[1:] = self._u_tilde[:-1]
        self._weight[1:] = self._weight[:-1]
        self._zeta[0] = zeta
        self._u_tilde[0] = u_tilde
        self._weight[0] = weight

        # Slots tau >= i are still zero, so they contribute nothing.
        Z = self._weight[:, None] * self._zeta
        self.S_xz += x[None, :, None] * Z[:, None, :]
        self.S_uz += self._lower[:, :, None, None] * (
            Z[:, None, None, :] * self._u_tilde[None, :, :, None]
        )
        self.k = i
        return self

    def estimate(self, tau: int) -> np.ndarray:
        """``H_hat_tau`` at the current step."""
        if not 0 <= tau < self.m:
            raise InvalidArgumentError(f"tau must lie in [0, {self.m}), got {tau}")
        return self._estimates(tau + 1)[tau]

    def estimate_all(self) -> list[np.ndarray]:
        """All ``m`` estimates in increasing ``tau``.

        Raises:
            UnavailableEstimateError: If ``k - tau < 1`` for some ``tau``.
        """
        return self._estimates(self.m)

    def _estimates(self, count: int) -> list[np.ndarray]:
        if self.k - (count - 1) < 1:
            raise UnavailableEstimateError(
                f"H_hat_{count - 1} needs k >= {count}, estimator is at k = {self.k}."
            )
        H: list[np.ndarray] = []
        for tau in range(count):
            correction = sum((H[t] @ self.S_uz[tau, t] for t in range(tau)), np.zeros((self.n, self.p)))
            H.append((self.S_xz[tau] - correction) / (self.k - tau))
        return H


class History(BaseModel):
    """Full trajectory history ``x_0..x_k``, ``zeta_0..zeta_{k-1}``, ``u_tilde_0..u_tilde_{k-1}``."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray = Field(..., description="States, shape (k+1, n).")
    zeta: np.ndarray = Field(..., description="Exploration draws, shape (k, p).")
    u_tilde: np.ndarray = Field(..., description="Exploitation inputs, shape (k, p).")
    scale: np.ndarray | None = Field(None, description="Exploration scales, shape (k,). Defaults to (j+1)^-beta.")

    @model_validator(mode="after")
    def _check_lengths(self):
        k = self.x.shape[0] - 1
        if self.zeta.shape[0] != k or self.u_tilde.shape[0] != k:
            raise ValueError("zeta and u_tilde must have one row fewer than x")
        if self.scale is not None and self.scale.shape != (k,):
            raise ValueError("scale must have one entry per input step")
        return self

    @property
    def k(self) -> int:
        return self.x.shape[0] - 1


def direct_estimate(history: History, tau: int, beta: float) -> np.ndarray:
    """Evaluate ``H_hat_tau`` by summing over the whole history.

    ``H_hat_t`` for ``t < tau`` is recomputed the same way. Used to check the
    recursive estimator.
    """
    k = history.k
    if tau < 0 or k < tau + 1:
        raise InvalidArgumentError(f"history of length {k} is too short for tau={tau}")
    if history.scale is None:
        inv_scale = np.arange(1, k + 1, dtype=float) ** beta
    else:
        inv_scale = 1.0 / history.scale
    H: list[np.ndarray] = []
    for s in range(tau + 1):
        # i runs over s+1..k; zeta index i-s-1 runs over 0..k-s-1.
        residual = history.x[s + 1 : k + 1].copy()
        for t in range(s):
            residual -= history.u_tilde[s - t : k - t] @ H[t].T
        weights = inv_scale[: k - s]
        H.append((residual * weights[:, None]).T @ history.zeta[: k - s] / (k - s))
    return H[tau]
