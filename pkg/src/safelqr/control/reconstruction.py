"""Recover ``(A, B)`` from a finite sequence of Markov parameters.

The estimates ``H_0..H_{m-1}`` define the zero-initial-state response of the
plant to any input sequence of length ``m``. Random probe sequences are pushed
through that response (a block lower-triangular Toeplitz product), and the
resulting virtual trajectories satisfy ``x_{i+1} = A x_i + B u_i`` exactly
when the ``H`` are exact, so ``[B A]`` follows from one least-squares solve.
"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from safelqr.control.algebra import pseudo_inverse
from safelqr.errors import DegenerateProbesError, InvalidArgumentError

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-8
MAX_REDRAWS = 5


def _rank_ok(M: np.ndarray) -> bool:
    if M.shape[0] > M.shape[1]:
        return False
    s = np.linalg.svd(M, compute_uv=False)
    return bool(s.size and s[0] > 0.0 and s[-1] > RANK_RTOL * s[0])


def _check_markov(H) -> tuple[list[np.ndarray], int, int]:
    if len(H) == 0:
        raise InvalidArgumentError("At least one Markov parameter is required.")
    H = [np.atleast_2d(np.asarray(h, dtype=float)) for h in H]
    n, p = H[0].shape
    for tau, h in enumerate(H):
        if h.shape != (n, p):
            raise InvalidArgumentError(f"H[{tau}] has shape {h.shape}, expected {(n, p)}.")
    return H, n, p


def block_toeplitz(H) -> np.ndarray:
    """Block lower-triangular Toeplitz matrix of ``H_0..H_{m-1}``.

    Block ``(i, j)`` is ``H_{i-j}`` for ``j <= i`` and zero otherwise, so row
    block ``i`` of ``T @ [u_0; ...; u_{m-1}]`` is the zero-initial-state
    response ``x_{i+1}``.
    """
    H, n, p = _check_markov(H)
    m = len(H)
    T = np.zeros((n * m, p * m))
    for i in range(m):
        for j in range(i + 1):
            T[i * n : (i + 1) * n, j * p : (j + 1) * p] = H[i - j]
    return T


class ProbeBattery(BaseModel):
    """Random probe inputs for the virtual trajectories.

    ``inputs[c, i]`` is the input applied at time ``i`` of virtual trajectory
    ``c``; the battery is reused across reconstructions so that estimates at
    different steps are compared on the same probes.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    inputs: np.ndarray = Field(..., description="Probe inputs, shape (N, m, p).")
    redraws: int = Field(0, description="Number of redraws needed to reach full input rank.")

    @classmethod
    def draw(cls, N: int, m: int, p: int, rng: np.random.Generator) -> "ProbeBattery":
        """Draw ``N`` standard normal probe sequences of length ``m``.

        Raises:
            InvalidArgumentError: If ``N < 1`` or ``m < 1``.
            DegenerateProbesError: If the stacked inputs stay rank deficient
                after five redraws.
        """
        if N < 1 or m < 1 or p < 1:
            raise InvalidArgumentError(f"N, m and p must be >= 1, got N={N}, m={m}, p={p}")
        for attempt in range(MAX_REDRAWS + 1):
            inputs = rng.standard_normal((N, m, p))
            if _rank_ok(inputs.reshape(N * m, p).T):
                return cls(inputs=inputs, redraws=attempt)
            logger.warning("Probe inputs rank deficient, redrawing (attempt %d)", attempt + 1)
        raise DegenerateProbesError(f"Probe inputs rank deficient after {MAX_REDRAWS} redraws.")

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def p(self) -> int:
        return self.inputs.shape[2]

    @property
    def stacked(self) -> np.ndarray:
        """``U^v``: one column per trajectory, inputs stacked in time order."""
        return self.inputs.reshape(self.N, self.m * self.p).T


class Reconstruction(BaseModel):
    """Estimated ``(A_hat, B_hat)`` and the conditioning of the regression."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray = Field(..., description="Estimated state matrix.")
    B: np.ndarray = Field(..., description="Estimated input matrix.")
    full_rank: bool = Field(..., description="Whether [U^h; X0^h] had full row rank.")


def reconstruct(H, N: int = 50, rng: np.random.Generator | None = None, battery: ProbeBattery | None = None) -> Reconstruction:
    """Regress ``[B_hat A_hat]`` on virtual trajectories generated by ``H``.

    Args:
        H: Markov parameters ``H_0..H_{m-1}``, each ``n x p``.
        N: Number of virtual trajectories when no battery is given.
        rng: Source of probe inputs when no battery is given.
        battery: Probe inputs to reuse.

    Returns:
        Reconstruction: ``A``, ``B`` and a rank flag. A rank deficient
        regression matrix yields the minimum-norm solution.
    """
    H, n, p = _check_markov(H)
    m = len(H)
    if battery is None:
        if rng is None:
            raise InvalidArgumentError("Either a probe battery or a generator is required.")
        battery = ProbeBattery.draw(N, m, p, rng)
    if battery.m != m or battery.p != p:
        raise InvalidArgumentError(f"Probe battery is {battery.m} x {battery.p}, Markov data needs {m} x {p}.")

    X1v = block_toeplitz(H) @ battery.stacked
    # (N, m, n): state x_{i+1} of trajectory c at [c, i].
    X1 = X1v.T.reshape(battery.N, m, n)
    X0 = np.concatenate([np.zeros((battery.N, 1, n)), X1[:, :-1]], axis=1)
    X1h = X1.reshape(-1, n).T
    X0h = X0.reshape(-1, n).T
    Uh = battery.inputs.reshape(-1, p).T

    regressors = np.vstack([Uh, X0h])
    full_rank = _rank_ok(regressors)
    if not full_rank:
        logger.debug("Reconstruction regressors are rank deficient; using the minimum-norm solution.")
    BA = X1h @ pseudo_inverse(regressors)
    return Reconstruction(A=BA[:, p:], B=BA[:, :p], full_rank=full_rank)
