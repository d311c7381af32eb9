"""Dense small-matrix control computations.

Spectral radius, Moore-Penrose pseudo-inverse, discrete Lyapunov and Riccati
solvers, the LQR gain, analytic policy costs and the Lyapunov/Riccati
perturbation bounds. Sizes are desk scale (n <= 16), so everything is dense
and exact to solver precision.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from safelqr.errors import DareFailureError, InvalidArgumentError, UnstableArgumentError

if TYPE_CHECKING:
    from safelqr.control.system import LinearSystem

PINV_RTOL = 1e-12
GELFAND_RTOL = 1e-6


def _as_matrix(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-dimensional, got shape {M.shape}.")
    if not np.all(np.isfinite(M)):
        raise InvalidArgumentError(f"{name} has non-finite entries.")
    return M


def _as_square(M, name: str = "matrix") -> np.ndarray:
    M = _as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got shape {M.shape}.")
    return M


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return ``(M + M^T) / 2``."""
    return 0.5 * (M + M.T)


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus of a square matrix.

    Uses the dense nonsymmetric eigensolver; if LAPACK fails to converge,
    falls back to the Gelfand formula ``||M^(2^j)||^(1/2^j)``.

    Raises:
        InvalidArgumentError: If ``M`` is not square or has non-finite entries.
    """
    M = _as_square(M, "M")
    if M.size == 0:
        return 0.0
    try:
        return float(np.max(np.abs(np.linalg.eigvals(M))))
    except np.linalg.LinAlgError:
        return _gelfand_radius(M)


def _gelfand_radius(M: np.ndarray, max_squarings: int = 60) -> float:
    # M^exponent == exp(log_scale) * power, with ||power||_2 == 1 after each rescale.
    power = M.copy()
    log_scale = 0.0
    exponent = 1
    previous = None
    for _ in range(max_squarings):
        norm = np.linalg.norm(power, 2)
        if norm == 0.0:
            return 0.0
        log_scale += np.log(norm)
        power = power / norm
        estimate = float(np.exp(log_scale / exponent))
        if previous is not None and abs(estimate - previous) <= GELFAND_RTOL * previous:
            return estimate
        previous = estimate
        power = power @ power
        log_scale *= 2.0
        exponent *= 2
    return previous


def pseudo_inverse(M) -> np.ndarray:
    """Moore-Penrose pseudo-inverse by SVD.

    Singular values below ``1e-12 * max(rows, cols) * sigma_max`` are treated as
    zero.
    """
    M = _as_matrix(M, "M")
    rows, cols = M.shape
    if M.size == 0:
        return np.zeros((cols, rows))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((cols, rows))
    cutoff = PINV_RTOL * max(rows, cols) * s[0]
    s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (Vt.T * s_inv) @ U.T


def _kron_operator(A_cl: np.ndarray) -> np.ndarray:
    n = A_cl.shape[0]
    return np.eye(n * n) - np.kron(A_cl.T, A_cl.T)


def _require_stable(A_cl: np.ndarray, name: str) -> float:
    rho = spectral_radius(A_cl)
    if rho >= 1.0:
        raise UnstableArgumentError(f"{name} must be Schur stable, spectral radius {rho:.6g} >= 1.")
    return rho


def solve_dlyap(A_cl, Qm) -> np.ndarray:
    """Solve ``A_cl^T X A_cl - X + Qm = 0`` by Kronecker vectorization.

    Args:
        A_cl: Stable ``n x n`` matrix.
        Qm: Symmetric ``n x n`` matrix.

    Returns:
        np.ndarray: The symmetrized solution ``X``.

    Raises:
        UnstableArgumentError: If ``spectral_radius(A_cl) >= 1``.
    """
    A_cl = _as_square(A_cl, "A_cl")
    Qm = _as_square(Qm, "Qm")
    if Qm.shape != A_cl.shape:
        raise InvalidArgumentError(f"Qm shape {Qm.shape} does not match A_cl shape {A_cl.shape}.")
    _require_stable(A_cl, "A_cl")
    n = A_cl.shape[0]
    vec_x = np.linalg.solve(_kron_operator(A_cl), Qm.reshape(-1, order="F"))
    return symmetrize(vec_x.reshape((n, n), order="F"))


def lyapunov_residual(A_cl: np.ndarray, X: np.ndarray, Qm: np.ndarray) -> float:
    """Frobenius norm of ``A_cl^T X A_cl - X + Qm``."""
    return float(np.linalg.norm(A_cl.T @ X @ A_cl - X + Qm, "fro"))


def lyap_operator_norm(A_cl) -> float:
    """``||(I - A_cl^T kron A_cl^T)^{-1}||_2`` for stable ``A_cl``."""
    A_cl = _as_square(A_cl, "A_cl")
    _require_stable(A_cl, "A_cl")
    s = np.linalg.svd(_kron_operator(A_cl), compute_uv=False)
    return float(1.0 / s[-1])


def lyap_norm_bound(A_cl, Qm) -> float:
    """Upper bound ``||(I - A_cl^T kron A_cl^T)^{-1}||_2 ||Qm||_F`` on ``||X||_F``."""
    Qm = _as_square(Qm, "Qm")
    return lyap_operator_norm(A_cl) * float(np.linalg.norm(Qm, "fro"))


def riccati_sensitivity_bound(A_cl, weight, delta_K) -> float:
    """Bound on ``||P_hat - P*||_F`` for a perturbed gain ``K_hat = K* + delta_K``.

    The perturbation solves ``dP = A_cl^T dP A_cl + dK^T (R + B^T P* B) dK``
    with ``A_cl = A + B K_hat``, hence
    ``||dP||_F <= ||(I - A_cl^T kron A_cl^T)^{-1}||_2 ||weight||_F ||dK||_F^2``
    holds for ``weight = R + B^T P* B``. Passing ``weight = R`` evaluates the
    cheaper R-only expression, which is not a bound in general.

    Args:
        A_cl: Stable closed loop ``A + B K_hat``.
        weight: ``p x p`` curvature weight.
        delta_K: Gain perturbation ``K_hat - K*``.
    """
    weight = _as_square(weight, "weight")
    delta_K = _as_matrix(delta_K, "delta_K")
    return (
        lyap_operator_norm(A_cl)
        * float(np.linalg.norm(weight, "fro"))
        * float(np.linalg.norm(delta_K, "fro")) ** 2
    )


class GainSolution(BaseModel):
    """Stabilizing DARE solution and the associated LQR gain."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    P: np.ndarray = Field(..., description="Symmetric positive definite DARE solution.")
    K: np.ndarray = Field(..., description="Feedback gain K = -(R + B'PB)^-1 B'PA.")
    closed_loop_rho: float = Field(..., description="Spectral radius of A + BK.")
    iterations: int = Field(..., description="Riccati iterations performed.")
    residual: float = Field(..., description="Frobenius norm of the DARE defect.")


def riccati_map(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, P: np.ndarray):
    """One application of the Riccati operator and the gain it induces."""
    BtP = B.T @ P
    gain = np.linalg.solve(R + BtP @ B, BtP @ A)
    P_next = Q + A.T @ P @ A - (A.T @ P @ B) @ gain
    return symmetrize(P_next), -gain


def dare_residual(A, B, Q, R, P) -> float:
    """Frobenius norm of ``Q + A'PA - A'PB(R + B'PB)^-1 B'PA - P``."""
    P_next, _ = riccati_map(A, B, Q, R, P)
    return float(np.linalg.norm(P_next - P, "fro"))


def solve_dare(A, B, Q, R, tol: float = 1e-12, max_iter: int = 100_000) -> GainSolution:
    """Solve the discrete algebraic Riccati equation by value iteration.

    Iterates the Riccati map from ``P = Q`` until the relative Frobenius change
    drops below ``tol``.

    Raises:
        InvalidArgumentError: On inconsistent dimensions or non-PD weights.
        DareFailureError: If the iteration does not converge within
            ``max_iter``, leaves the finite range, or the resulting closed
            loop is not stable.
    """
    A = _as_square(A, "A")
    B = _as_matrix(B, "B")
    Q = _as_square(Q, "Q")
    R = _as_square(R, "R")
    n = A.shape[0]
    if B.shape[0] != n or Q.shape != (n, n) or R.shape != (B.shape[1], B.shape[1]):
        raise InvalidArgumentError(
            f"Inconsistent DARE dimensions: A {A.shape}, B {B.shape}, Q {Q.shape}, R {R.shape}."
        )
    for name, weight in (("Q", Q), ("R", R)):
        if weight.size and np.min(np.linalg.eigvalsh(symmetrize(weight))) <= 0.0:
            raise InvalidArgumentError(f"{name} must be symmetric positive definite.")

    P = symmetrize(Q.copy())
    K = np.zeros((B.shape[1], n))
    converged = False
    iterations = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for iterations in range(1, max_iter + 1):
            try:
                P_next, K = riccati_map(A, B, Q, R, P)
            except np.linalg.LinAlgError as exc:
                raise DareFailureError(f"Riccati iteration became singular: {exc}") from exc
            if not np.all(np.isfinite(P_next)):
                raise DareFailureError(f"Riccati iteration left the finite range after {iterations} steps.")
            change = np.linalg.norm(P_next - P, "fro")
            P = P_next
            if change <= tol * max(np.linalg.norm(P, "fro"), 1e-300):
                converged = True
                break
    if not converged:
        raise DareFailureError(f"Riccati iteration did not converge in {max_iter} steps.")

    _, K = riccati_map(A, B, Q, R, P)
    rho = spectral_radius(A + B @ K)
    if rho >= 1.0:
        raise DareFailureError(f"DARE gain does not stabilize the closed loop (rho = {rho:.6g}).")
    return GainSolution(
        P=P,
        K=K,
        closed_loop_rho=rho,
        iterations=iterations,
        residual=dare_residual(A, B, Q, R, P),
    )


def closed_loop(sys: "LinearSystem", K) -> np.ndarray:
    """Return ``A + B K``."""
    K = _as_matrix(K, "K")
    if K.shape != (sys.p, sys.n):
        raise InvalidArgumentError(f"K must have shape {(sys.p, sys.n)}, got {K.shape}.")
    return sys.A + sys.B @ K


def policy_value_matrix(sys: "LinearSystem", K) -> np.ndarray:
    """``P_K`` solving ``P_K = Q + K'RK + (A+BK)' P_K (A+BK)``."""
    K = _as_matrix(K, "K")
    return solve_dlyap(closed_loop(sys, K), sys.Q + K.T @ sys.R @ K)


def policy_cost(sys: "LinearSystem", K) -> float:
    """Infinite-horizon average cost ``Tr(W P_K)`` of the linear policy ``u = K x``.

    Raises:
        UnstableArgumentError: If ``A + B K`` is not stable, i.e. the policy is
            destabilizing and its cost is infinite.
    """
    return float(np.trace(sys.W @ policy_value_matrix(sys, K)))


def noisy_policy_cost(sys: "LinearSystem", K, sigma2: float) -> float:
    """Average cost of ``u = K x + sigma * zeta`` with ``zeta ~ N(0, I)``.

    The exploration term acts as extra process noise ``sigma^2 B B'`` and adds
    ``sigma^2 Tr(R)`` of input cost directly.
    """
    P_K = policy_value_matrix(sys, K)
    W_eff = sys.W + sigma2 * sys.B @ sys.B.T
    return float(np.trace(W_eff @ P_K) + sigma2 * np.trace(sys.R))
