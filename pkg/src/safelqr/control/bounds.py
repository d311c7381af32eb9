"""Analytic bounds for switched linear systems driven by Gaussian noise.

A :class:`BoundCertificate` collects a Lyapunov pair ``(P, rho)`` with
``M_i' P M_i <= rho P`` for every system matrix ``M_i`` that can be active,
the accumulated noise ``W_acc = ||W + A W A' + A^2 W A^2' + ...||`` and the
switching parameters ``(M, t)``. From it this module evaluates:

* the escape probability bound on ``P(||x_k|| >= M)``,
* the fourth-moment bound on ``E ||x_k||^4`` under a safe switching policy,
* the cost gap between a switching policy and its linear feedback.

Escape-type terms assume ``rho > 1/4``; smaller contraction factors are
lifted to ``0.26`` there, which only loosens the bounds.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

from safelqr.control.algebra import solve_dlyap, spectral_radius
from safelqr.control.system import LinearSystem
from safelqr.errors import (
    BoundValidityError,
    CertificateUnavailableError,
    InvalidArgumentError,
    UnstableArgumentError,
)

RHO_FLOOR = 0.26
SERIES_TOL = 1e-14
SERIES_CAP = 100_000
CERTIFICATE_TOL = 1e-10


class BoundCertificate(BaseModel):
    """Lyapunov certificate plus the constants shared by the switched-system bounds."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    P: np.ndarray = Field(..., description="Lyapunov matrix, symmetric positive definite.")
    rho: float = Field(..., description="Contraction factor with M' P M <= rho P.")
    kappa: float = Field(..., description="Condition ratio ||P|| / lambda_min(P).")
    W_acc: float = Field(..., description="Accumulated noise norm.")
    A_bound: float = Field(..., description="||A|| + ||B|| M, the size of any applied closed loop.")
    M: float = Field(..., description="Switching threshold.")
    t: int = Field(1, description="Length of a non-action run.")
    n: int = Field(..., description="State dimension.")

    @property
    def rho_escape(self) -> float:
        """Contraction factor used by escape-type terms."""
        return max(self.rho, RHO_FLOOR)

    @property
    def c(self) -> float:
        """Exponent rate ``(1 - rho^(1/4))^2 / (4 W_acc kappa)``."""
        return (1.0 - self.rho_escape**0.25) ** 2 / (4.0 * self.W_acc * self.kappa)

    @property
    def escape_floor(self) -> float:
        """Smallest ``M`` for which the escape bound holds."""
        return math.sqrt(3.0 * self.W_acc * self.kappa) / (1.0 - self.rho_escape**0.25)

    @property
    def P_norm(self) -> float:
        return float(np.linalg.norm(self.P, 2))

    def certifies(self, matrix) -> bool:
        """Whether ``matrix' P matrix <= rho P`` holds up to 1e-10."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        return _contraction(self.P, [matrix]) <= self.rho + CERTIFICATE_TOL


def _contraction(P: np.ndarray, matrices) -> float:
    """Smallest ``rho`` with ``M' P M <= rho P`` for every matrix."""
    return max(float(scipy.linalg.eigh(M.T @ P @ M, P, eigvals_only=True)[-1]) for M in matrices)


def lyapunov_certificate(A) -> tuple[np.ndarray, float]:
    """``P`` solving ``A' P A - P + I = 0`` and ``rho = 1 - 1/lambda_max(P)``.

    Then ``A' P A = P - I <= rho P``.

    Raises:
        UnstableArgumentError: If ``A`` is not stable.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    P = solve_dlyap(A, np.eye(A.shape[0]))
    return P, float(1.0 - 1.0 / np.linalg.eigvalsh(P)[-1])


def common_certificate(matrices) -> tuple[np.ndarray, float]:
    """A Lyapunov pair ``(P, rho)`` shared by all ``matrices``.

    Tries ``P = I``, the Lyapunov solution of each matrix and their sum, and
    keeps the candidate with the smallest contraction factor.

    Raises:
        CertificateUnavailableError: If no candidate certifies every matrix.
    """
    matrices = [np.atleast_2d(np.asarray(M, dtype=float)) for M in matrices]
    if not matrices:
        raise InvalidArgumentError("At least one matrix is required.")
    n = matrices[0].shape[0]
    candidates = [np.eye(n)]
    if all(spectral_radius(M) < 1.0 for M in matrices):
        solutions = [solve_dlyap(M, np.eye(n)) for M in matrices]
        candidates.extend(solutions)
        if len(solutions) > 1:
            candidates.append(sum(solutions))
    best: tuple[np.ndarray, float] | None = None
    for P in candidates:
        rho = _contraction(P, matrices)
        if rho < 1.0 and (best is None or rho < best[1]):
            best = (P, rho)
    if best is None:
        raise CertificateUnavailableError(
            f"No common Lyapunov certificate found for {len(matrices)} matrices."
        )
    return best


def noise_accumulation(A, W) -> float:
    """Spectral norm of ``S`` solving ``A S A' - S + W = 0``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(np.linalg.norm(solve_dlyap(A.T, np.atleast_2d(W)), 2))


def make_certificate(sys: LinearSystem, M: float, t: int = 1, K=None) -> BoundCertificate:
    """Certificate for the open loop, or for switching between ``A`` and ``A + B K``.

    The accumulated noise is taken as the largest over the certified matrices.

    Raises:
        BoundValidityError: If ``M <= 0``, ``t < 1`` or ``||K|| > M``.
        CertificateUnavailableError: If ``A`` and ``A + B K`` have no common
            certificate.
    """
    if M <= 0.0 or t < 1:
        raise BoundValidityError(f"Need M > 0 and t >= 1, got M={M}, t={t}")
    matrices = [sys.A]
    if K is not None:
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if np.linalg.norm(K, 2) > M:
            raise BoundValidityError(f"||K|| = {np.linalg.norm(K, 2):.4g} exceeds the threshold M = {M}.")
        matrices.append(sys.A + sys.B @ K)
    if len(matrices) == 1:
        P, rho = lyapunov_certificate(sys.A)
    else:
        P, rho = common_certificate(matrices)
    eigenvalues = np.linalg.eigvalsh(P)
    return BoundCertificate(
        P=P,
        rho=rho,
        kappa=float(eigenvalues[-1] / eigenvalues[0]),
        W_acc=max(noise_accumulation(Mi, sys.W) for Mi in matrices),
        A_bound=float(np.linalg.norm(sys.A, 2) + np.linalg.norm(sys.B, 2) * M),
        M=float(M),
        t=int(t),
        n=sys.n,
    )


def escape_bound(cert: BoundCertificate, n: int | None = None) -> float:
    """Bound on ``P(||x_k|| >= M)`` for the certified switched system.

    ``2^(n/2+1) / (rho^(-1/2) - 1) * exp(-c M^2)``.

    Raises:
        BoundValidityError: If ``M`` is below :attr:`BoundCertificate.escape_floor`.
    """
    n = cert.n if n is None else n
    if cert.W_acc <= 0.0:
        return 0.0
    if cert.M < cert.escape_floor:
        raise BoundValidityError(
            f"Escape bound needs M >= {cert.escape_floor:.6g}, got M = {cert.M:.6g}."
        )
    prefactor = 2.0 ** (n / 2.0 + 1.0) / (cert.rho_escape**-0.5 - 1.0)
    return prefactor * math.exp(-cert.c * cert.M**2)


def _moment_term(cert: BoundCertificate) -> float:
    """The ``Q(M, rho, P)`` term of the fourth-moment bound."""
    rho, W, kappa = cert.rho, cert.W_acc, cert.kappa
    drive = cert.M**2 * cert.A_bound**2 + W
    return (drive * cert.P_norm**2 / ((1.0 - rho) * (1.0 - rho**2))) * (
        (1.0 + rho) * drive + 4.0 * cert.A_bound**2 * W * kappa
    )


def fourth_moment_bound(cert: BoundCertificate) -> float:
    """Bound ``8 [Q + W_acc^2 kappa^2]`` on ``E ||x_k||^4`` under safe switching."""
    return 8.0 * (_moment_term(cert) + cert.W_acc**2 * cert.kappa**2)


def power_norm_series(A_cl) -> float:
    """``sum_s ||A_cl^s||_2``, truncated once a term drops below 1e-14."""
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    power = np.eye(A_cl.shape[0])
    total = 0.0
    for _ in range(SERIES_CAP):
        term = float(np.linalg.norm(power, 2))
        total += term
        if term < SERIES_TOL:
            break
        power = power @ A_cl
    return total


class SwitchingGapTerms(BaseModel):
    """Constants of the switching-gap bound ``2 C1 G + G^2``."""

    C1: float = Field(..., description="sqrt(W_acc kappa ||Q_K|| / (1 - rho)).")
    C2: float = Field(..., description="||Q_K|| ||BK|| sum_s ||(A+BK)^s|| 2^(n/2+7/4) / (rho^(-1/2) - 1).")
    Q_term: float = Field(..., description="Fourth-moment term Q(M, rho, P).")
    E: float = Field(..., description="exp(-c M^2).")
    G: float = Field(..., description="C2 t (Q + W_acc^2 kappa^2)^(1/4) E.")

    @property
    def bound(self) -> float:
        return 2.0 * self.C1 * self.G + self.G**2


def switching_gap_terms(cert: BoundCertificate, K, sys: LinearSystem) -> SwitchingGapTerms:
    """Evaluate the constants of the switching-gap bound.

    Raises:
        BoundValidityError: If ``||K|| > M``.
        UnstableArgumentError: If ``A + B K`` is not stable.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if np.linalg.norm(K, 2) > cert.M:
        raise BoundValidityError(f"||K|| exceeds the threshold M = {cert.M}.")
    A_cl = sys.A + sys.B @ K
    if spectral_radius(A_cl) >= 1.0:
        raise UnstableArgumentError("A + B K must be stable for the switching-gap bound.")
    Q_K = float(np.linalg.norm(sys.Q + K.T @ sys.R @ K, 2))
    C1 = math.sqrt(cert.W_acc * cert.kappa * Q_K / (1.0 - cert.rho))
    C2 = (
        Q_K
        * float(np.linalg.norm(sys.B @ K, 2))
        * power_norm_series(A_cl)
        * 2.0 ** (cert.n / 2.0 + 1.75)
        / (cert.rho_escape**-0.5 - 1.0)
    )
    Q_term = _moment_term(cert)
    E = math.exp(-cert.c * cert.M**2) if cert.W_acc > 0.0 else 0.0
    G = C2 * cert.t * (Q_term + cert.W_acc**2 * cert.kappa**2) ** 0.25 * E
    return SwitchingGapTerms(C1=C1, C2=C2, Q_term=Q_term, E=E, G=G)


def switching_gap_bound(cert: BoundCertificate, K, sys: LinearSystem) -> float:
    """Bound on the cost excess of the switching policy over ``u = K x``."""
    return switching_gap_terms(cert, K, sys).bound
