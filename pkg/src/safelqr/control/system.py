"""Plant model, Gaussian sampling and closed-loop rollouts.

:class:`LinearSystem` describes ``x_{k+1} = A x_k + B u_k + w_k`` with
``w_k ~ N(0, W)``, ``x_0 ~ N(0, X0)`` and stage cost ``x'Qx + u'Ru``.
:func:`simulate` rolls a single closed loop forward and stores it in a
:class:`TrajectoryRecord`; :func:`rollout` runs a batch of independent closed
loops for cost estimation.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator, model_validator

from safelqr.control.algebra import solve_dlyap, spectral_radius, symmetrize
from safelqr.errors import DivergedError, InvalidArgumentError, UnstableArgumentError

if TYPE_CHECKING:
    from safelqr.control.policy import Policy

DIVERGENCE_THRESHOLD = 1e12
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
NOISE_CHUNK = 4096


class LinearSystem(BaseModel):
    """Linear time-invariant plant with Gaussian noise and quadratic cost.

    Attributes:
        A: ``n x n`` state transition.
        B: ``n x p`` input matrix.
        W: Process-noise covariance (symmetric PSD).
        X0: Initial-state covariance (symmetric PSD).
        Q: State cost weight (symmetric PD).
        R: Input cost weight (symmetric PD).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray = Field(..., description="State transition matrix, n x n.")
    B: np.ndarray = Field(..., description="Input matrix, n x p.")
    W: np.ndarray = Field(..., description="Process-noise covariance, n x n.")
    X0: np.ndarray = Field(..., description="Initial-state covariance, n x n.")
    Q: np.ndarray = Field(..., description="State cost weight, n x n.")
    R: np.ndarray = Field(..., description="Input cost weight, p x p.")

    @field_validator("A", "B", "W", "X0", "Q", "R", mode="before")
    @classmethod
    def _to_matrix(cls, value):
        array = np.array(value, dtype=float)
        if array.ndim == 0:
            array = array.reshape(1, 1)
        if array.ndim != 2:
            raise ValueError(f"expected a matrix, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("matrix has non-finite entries")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_consistency(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n) or n < 1:
            raise ValueError(f"A must be square and nonempty, got shape {self.A.shape}")
        if self.B.shape[0] != n or self.B.shape[1] < 1:
            raise ValueError(f"B must have shape ({n}, p) with p >= 1, got {self.B.shape}")
        p = self.B.shape[1]
        for name, shape in (("W", (n, n)), ("X0", (n, n)), ("Q", (n, n)), ("R", (p, p))):
            matrix = getattr(self, name)
            if matrix.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {matrix.shape}")
            if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(matrix))):
                raise ValueError(f"{name} must be symmetric")
        for name in ("W", "X0"):
            if np.min(np.linalg.eigvalsh(getattr(self, name))) < -SYMMETRY_TOL:
                raise ValueError(f"{name} must be positive semidefinite")
        for name in ("Q", "R"):
            if np.min(np.linalg.eigvalsh(getattr(self, name))) <= 0.0:
                raise ValueError(f"{name} must be positive definite")
        return self

    @classmethod
    def from_arrays(cls, A, B, W=None, X0=None, Q=None, R=None) -> "LinearSystem":
        """Build a system, defaulting every omitted covariance/weight to identity.

        Raises:
            InvalidArgumentError: If the matrices are inconsistent or violate
                the symmetry/definiteness requirements.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        n = A.shape[0]
        p = B.shape[1] if B.ndim == 2 else 1
        try:
            return cls(
                A=A,
                B=B,
                W=np.eye(n) if W is None else W,
                X0=np.eye(n) if X0 is None else X0,
                Q=np.eye(n) if Q is None else Q,
                R=np.eye(p) if R is None else R,
            )
        except ValidationError as exc:
            raise InvalidArgumentError(str(exc)) from exc

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.A)

    def require_stable(self) -> "LinearSystem":
        """Return ``self`` if ``A`` is Schur stable.

        Raises:
            UnstableArgumentError: If ``spectral_radius(A) >= 1``. Unstable plants
                must be pre-stabilized before the safe scheme can be applied.
        """
        rho = self.spectral_radius
        if rho >= 1.0:
            raise UnstableArgumentError(
                f"The safe scheme needs an open-loop stable plant; spectral radius of A is {rho:.6g}."
            )
        return self


class TrajectoryRecord(BaseModel):
    """Preallocated per-step log of one closed-loop run.

    Scalar columns (norms, SafeSteps, gain id, exploration scale) are always
    kept. Full vectors ``x, u, u_tilde, zeta`` are kept only when the record is
    allocated with ``full=True``. Every ``stride``-th step is stored.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    stride: int = Field(1, description="Only steps with k % stride == 0 are stored.")
    k: np.ndarray = Field(..., description="Step indices.")
    norm_x: np.ndarray = Field(..., description="Euclidean norm of x_k.")
    norm_u: np.ndarray = Field(..., description="Euclidean norm of the applied input u_k.")
    safesteps: np.ndarray = Field(..., description="SafeSteps counter in effect when u_k was chosen.")
    gain_id: np.ndarray = Field(..., description="Index of the gain in effect at step k.")
    scale: np.ndarray = Field(..., description="Exploration scale s_k with u_k = u_tilde_k + s_k zeta_k.")
    x: np.ndarray | None = Field(None, description="States, present for full records.")
    u: np.ndarray | None = Field(None, description="Applied inputs, present for full records.")
    u_tilde: np.ndarray | None = Field(None, description="Exploitation inputs, present for full records.")
    zeta: np.ndarray | None = Field(None, description="Exploration draws, present for full records.")

    _size: int = PrivateAttr(0)

    @classmethod
    def allocate(cls, n: int, p: int, steps: int, stride: int = 1, full: bool = False) -> "TrajectoryRecord":
        if stride < 1:
            raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
        rows = (steps + stride - 1) // stride
        return cls(
            stride=stride,
            k=np.zeros(rows, dtype=np.int64),
            norm_x=np.zeros(rows),
            norm_u=np.zeros(rows),
            safesteps=np.zeros(rows, dtype=np.int64),
            gain_id=np.zeros(rows, dtype=np.int64),
            scale=np.zeros(rows),
            x=np.zeros((rows, n)) if full else None,
            u=np.zeros((rows, p)) if full else None,
            u_tilde=np.zeros((rows, p)) if full else None,
            zeta=np.zeros((rows, p)) if full else None,
        )

    @property
    def full(self) -> bool:
        return self.x is not None

    def __len__(self) -> int:
        return self._size

    def append(self, k: int, x, u, u_tilde, zeta, safesteps: int, gain_id: int, scale: float) -> None:
        """Store step ``k`` if it falls on the stride."""
        if k % self.stride:
            return
        i = self._size
        if i >= self.k.shape[0]:
            raise IndexError(f"TrajectoryRecord is full ({i} rows)")
        self.k[i] = k
        self.norm_x[i] = np.linalg.norm(x)
        self.norm_u[i] = np.linalg.norm(u)
        self.safesteps[i] = safesteps
        self.gain_id[i] = gain_id
        self.scale[i] = scale
        if self.x is not None:
            self.x[i] = x
            self.u[i] = u
            self.u_tilde[i] = u_tilde
            self.zeta[i] = zeta
        self._size = i + 1

    def trimmed(self) -> "TrajectoryRecord":
        """Copy holding only the filled rows."""
        size = self._size
        fields = {
            name: (None if getattr(self, name) is None else getattr(self, name)[:size].copy())
            for name in ("k", "norm_x", "norm_u", "safesteps", "gain_id", "scale", "x", "u", "u_tilde", "zeta")
        }
        record = TrajectoryRecord(stride=self.stride, **fields)
        record._size = size
        return record


def step(sys: LinearSystem, x, u, w) -> np.ndarray:
    """One step of ``x' = A x + B u + w``.

    Raises:
        InvalidArgumentError: On dimension mismatch.
    """
    x, u, w = (np.asarray(v, dtype=float) for v in (x, u, w))
    if x.shape != (sys.n,) or w.shape != (sys.n,) or u.shape != (sys.p,):
        raise InvalidArgumentError(
            f"Expected x, w of shape ({sys.n},) and u of shape ({sys.p},); got {x.shape}, {w.shape}, {u.shape}."
        )
    return sys.A @ x + sys.B @ u + w


def covariance_factor(cov) -> np.ndarray:
    """Matrix ``L`` with ``L L' = cov``.

    Cholesky with a 1e-12 diagonal jitter first; falls back to the symmetric
    eigen square root with eigenvalues down to ``-1e-8`` clamped at zero.

    Raises:
        InvalidArgumentError: If ``cov`` is not square or has an eigenvalue
            below ``-1e-8``.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise InvalidArgumentError(f"Covariance must be square, got shape {cov.shape}.")
    cov = symmetrize(cov)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    if eigenvalues.size and eigenvalues[0] < -PSD_TOL:
        raise InvalidArgumentError(f"Covariance is not positive semidefinite (eigenvalue {eigenvalues[0]:.3e}).")
    if eigenvalues.size and eigenvalues[0] > 0.0:
        try:
            return np.linalg.cholesky(cov + 1e-12 * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            pass
    return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


class GaussianSampler:
    """Zero-mean Gaussian sampler with a cached covariance factor."""

    def __init__(self, cov):
        self.factor = covariance_factor(cov)
        self.dim = self.factor.shape[0]

    def draw(self, rng: np.random.Generator, size: int | tuple[int, ...] | None = None) -> np.ndarray:
        """Draw samples; the trailing axis is the vector dimension."""
        shape = (self.dim,) if size is None else tuple(np.atleast_1d(size)) + (self.dim,)
        return rng.standard_normal(shape) @ self.factor.T


def sample_gaussian(rng: np.random.Generator, cov) -> np.ndarray:
    """Single draw from ``N(0, cov)``."""
    return GaussianSampler(cov).draw(rng)


def _check_finite(x: np.ndarray, k: int) -> None:
    norm = float(np.linalg.norm(x))
    if not np.isfinite(norm) or norm > DIVERGENCE_THRESHOLD:
        raise DivergedError(k, norm)


def simulate(
    sys: LinearSystem,
    policy: "Policy",
    steps: int,
    rng: np.random.Generator,
    stride: int = 1,
    full: bool = True,
) -> TrajectoryRecord:
    """Roll one closed loop forward for ``steps`` steps.

    ``x_0 ~ N(0, X0)``; at every step the policy sees ``(x_k, xi_k, k)`` and a
    fresh standard normal ``zeta_k``, and the plant receives ``w_k ~ N(0, W)``.

    Raises:
        InvalidArgumentError: If ``steps < 1``.
        DivergedError: If ``||x_k||`` is non-finite or exceeds ``1e12``.
    """
    if steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    record = TrajectoryRecord.allocate(sys.n, sys.p, steps, stride=stride, full=full)
    noise = GaussianSampler(sys.W)
    x = GaussianSampler(sys.X0).draw(rng)
    xi = np.zeros(1, dtype=np.int64)
    for start in range(0, steps, NOISE_CHUNK):
        chunk = min(NOISE_CHUNK, steps - start)
        zetas = rng.standard_normal((chunk, sys.p))
        ws = noise.draw(rng, chunk)
        for j in range(chunk):
            k = start + j
            _check_finite(x, k)
            decision = policy.decide(x[None, :], xi, k, zetas[j][None, :])
            u = decision.u[0]
            record.append(k, x, u, decision.u_tilde[0], zetas[j], int(xi[0]), 0, decision.scale)
            xi = decision.xi
            x = sys.A @ x + sys.B @ u + ws[j]
    _check_finite(x, steps)
    return record


class RolloutResult(BaseModel):
    """Outcome of a batch of independent closed-loop rollouts."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    mean_cost: float = Field(..., description="Average stage cost over steps and replicates; inf if diverged.")
    final_states: np.ndarray = Field(..., description="States x_T of every replicate, shape (N, n).")
    diverged: bool = Field(False, description="Whether any replicate left the finite region.")
    diverged_step: int | None = Field(None, description="First step at which divergence was detected.")


def rollout(
    sys: LinearSystem,
    policy: "Policy",
    T: int,
    N: int,
    rng: np.random.Generator,
) -> RolloutResult:
    """Run ``N`` independent ``T``-step closed loops in lockstep.

    Draws are consumed in the same order for every policy, so two calls with
    generators in the same state share all noise realizations.
    """
    if T < 1 or N < 1:
        raise InvalidArgumentError(f"T and N must be >= 1, got T={T}, N={N}")
    noise = GaussianSampler(sys.W)
    x = GaussianSampler(sys.X0).draw(rng, N)
    xi = np.zeros(N, dtype=np.int64)
    total = 0.0
    for start in range(0, T, NOISE_CHUNK):
        chunk = min(NOISE_CHUNK, T - start)
        zetas = rng.standard_normal((chunk, N, sys.p))
        ws = noise.draw(rng, (chunk, N))
        for j in range(chunk):
            k = start + j
            decision = policy.decide(x, xi, k, zetas[j])
            u = decision.u
            total += float(np.einsum("ij,jk,ik->", x, sys.Q, x) + np.einsum("ij,jk,ik->", u, sys.R, u))
            xi = decision.xi
            x = x @ sys.A.T + u @ sys.B.T + ws[j]
            norm = np.max(np.linalg.norm(x, axis=1))
            if not np.isfinite(norm) or norm > DIVERGENCE_THRESHOLD:
                return RolloutResult(mean_cost=np.inf, final_states=x, diverged=True, diverged_step=k + 1)
    return RolloutResult(mean_cost=total / (T * N), final_states=x)


def random_stable_system(n: int, p: int, target_rho: float, rng: np.random.Generator) -> LinearSystem:
    """Random plant with ``spectral_radius(A) == target_rho``.

    ``A`` is a rescaled standard normal matrix and ``B`` is standard normal;
    every covariance and weight is the identity.
    """
    if n < 1 or p < 1:
        raise InvalidArgumentError(f"n and p must be >= 1, got n={n}, p={p}")
    if not 0.0 < target_rho < 1.0:
        raise InvalidArgumentError(f"target_rho must lie in (0, 1), got {target_rho}")
    while True:
        G = rng.standard_normal((n, n))
        rho = spectral_radius(G)
        if rho >= 1e-8:
            break
    A = G * (target_rho / rho)
    B = rng.standard_normal((n, p))
    return LinearSystem.from_arrays(A, B)


def true_markov(sys: LinearSystem, count: int) -> list[np.ndarray]:
    """Markov parameters ``[B, AB, A^2 B, ...]`` of length ``count``."""
    if count < 1:
        raise InvalidArgumentError(f"count must be >= 1, got {count}")
    H = [np.array(sys.B)]
    for _ in range(count - 1):
        H.append(sys.A @ H[-1])
    return H


def stationary_covariance(sys: LinearSystem, K=None, sigma2: float = 0.0) -> np.ndarray:
    """Steady-state covariance ``S`` of ``x`` under ``u = K x + sigma zeta``.

    Solves ``A_cl S A_cl' - S + W + sigma^2 B B' = 0``. With ``K=None`` the
    open loop is used.
    """
    A_cl = sys.A if K is None else sys.A + sys.B @ np.atleast_2d(K)
    return solve_dlyap(A_cl.T, sys.W + sigma2 * sys.B @ sys.B.T)
