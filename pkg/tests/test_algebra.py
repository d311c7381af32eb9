import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from conftest import SCALAR_K, SCALAR_P
from safelqr.control.algebra import (
    dare_residual,
    lyap_norm_bound,
    lyap_operator_norm,
    noisy_policy_cost,
    policy_cost,
    policy_value_matrix,
    pseudo_inverse,
    riccati_sensitivity_bound,
    solve_dare,
    solve_dlyap,
    spectral_radius,
)
from safelqr.control.system import LinearSystem, random_stable_system
from safelqr.errors import DareFailureError, InvalidArgumentError, UnstableArgumentError


def test_spectral_radius_examples():
    assert spectral_radius([[0.5, 2.0], [0.0, 0.5]]) == pytest.approx(0.5)
    assert spectral_radius([[0.0, 1.0], [0.0, 0.0]]) == 0.0
    A0 = np.array([[0.5, 2.0], [0.0, 0.5]])
    A1 = np.array([[0.5, 0.0], [2.0, 0.5]])
    assert spectral_radius(A1 @ A0) == pytest.approx(4.4860, abs=1e-4)


def test_spectral_radius_rejects_non_finite():
    with pytest.raises(InvalidArgumentError):
        spectral_radius([[np.inf]])


def test_pseudo_inverse_examples():
    assert_allclose(pseudo_inverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    assert_allclose(pseudo_inverse([[1.0, 1.0]]), [[0.5], [0.5]])
    assert_allclose(pseudo_inverse(np.zeros((2, 3))), np.zeros((3, 2)))


def test_pseudo_inverse_moore_penrose_identities(rng):
    M = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 4))
    M_plus = pseudo_inverse(M)
    assert_allclose(M @ M_plus @ M, M, atol=1e-10)
    assert_allclose(M_plus @ M @ M_plus, M_plus, atol=1e-10)
    assert_allclose(M @ M_plus, (M @ M_plus).T, atol=1e-10)
    assert_allclose(M_plus, np.linalg.pinv(M), atol=1e-10)


def test_solve_dlyap_scalar():
    assert_allclose(solve_dlyap([[0.5]], [[1.0]]), [[4.0 / 3.0]])


def test_solve_dlyap_matches_scipy(rng):
    A = random_stable_system(4, 1, 0.8, rng).A
    Qm = np.eye(4) + 0.1 * np.ones((4, 4))
    X = solve_dlyap(A, Qm)
    assert_allclose(X, scipy.linalg.solve_discrete_lyapunov(A.T, Qm), rtol=1e-9, atol=1e-12)
    assert_allclose(X, X.T)


def test_solve_dlyap_rejects_unstable():
    with pytest.raises(UnstableArgumentError):
        solve_dlyap([[1.0]], [[1.0]])


def test_dare_scalar(scalar_system):
    sol = solve_dare(scalar_system.A, scalar_system.B, scalar_system.Q, scalar_system.R)
    assert sol.P[0, 0] == pytest.approx(SCALAR_P, abs=1e-9)
    assert sol.P[0, 0] == pytest.approx(1.1327822186, abs=1e-8)
    assert sol.K[0, 0] == pytest.approx(SCALAR_K, abs=1e-9)
    assert sol.K[0, 0] == pytest.approx(-0.2655644, abs=1e-6)
    assert sol.residual < 1e-9
    assert sol.closed_loop_rho < 1.0


def test_dare_without_actuation():
    sol = solve_dare([[0.5]], [[0.0]], [[1.0]], [[1.0]])
    assert sol.P[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-9)
    assert_allclose(sol.K, 0.0)
    sol = solve_dare(np.zeros((2, 2)), np.ones((2, 1)), np.eye(2), [[1.0]])
    assert_allclose(sol.P, np.eye(2))
    assert_allclose(sol.K, 0.0)


def test_dare_matches_scipy(small_system):
    sys = small_system
    sol = solve_dare(sys.A, sys.B, sys.Q, sys.R)
    P = scipy.linalg.solve_discrete_are(sys.A, sys.B, sys.Q, sys.R)
    assert_allclose(sol.P, P, rtol=1e-8)
    K = -np.linalg.solve(sys.R + sys.B.T @ P @ sys.B, sys.B.T @ P @ sys.A)
    assert_allclose(sol.K, K, rtol=1e-7, atol=1e-10)
    assert dare_residual(sys.A, sys.B, sys.Q, sys.R, sol.P) < 1e-8


def test_dare_fails_without_stabilizability():
    with pytest.raises(DareFailureError):
        solve_dare([[2.0]], [[0.0]], [[1.0]], [[1.0]])


def test_dare_rejects_bad_weights():
    with pytest.raises(InvalidArgumentError):
        solve_dare([[0.5]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(InvalidArgumentError):
        solve_dare([[0.5]], [[1.0, 1.0]], [[1.0]], [[1.0]])


def test_policy_cost_examples(scalar_system):
    sys = LinearSystem.from_arrays(A=np.zeros((2, 2)), B=np.eye(2), W=np.zeros((2, 2)))
    assert policy_cost(sys, np.zeros((2, 2))) == 0.0
    assert policy_cost(scalar_system, [[SCALAR_K]]) == pytest.approx(1.1327822, abs=1e-6)
    assert policy_cost(scalar_system, [[0.0]]) == pytest.approx(4.0 / 3.0)


def test_policy_cost_rejects_destabilizing_gain(scalar_system):
    with pytest.raises(UnstableArgumentError):
        policy_cost(scalar_system, [[0.7]])
    with pytest.raises(InvalidArgumentError):
        policy_cost(scalar_system, [[0.1, 0.1]])


def test_optimal_gain_beats_perturbations(small_system, rng):
    sol = solve_dare(small_system.A, small_system.B, small_system.Q, small_system.R)
    J_star = policy_cost(small_system, sol.K)
    for _ in range(20):
        K = sol.K + 0.05 * rng.standard_normal(sol.K.shape)
        assert policy_cost(small_system, K) >= J_star - 1e-9


def test_lyap_norm_bound_dominates_solution(rng):
    A = random_stable_system(3, 1, 0.7, rng).A
    Qm = np.diag([1.0, 2.0, 3.0])
    assert np.linalg.norm(solve_dlyap(A, Qm), "fro") <= lyap_norm_bound(A, Qm) * (1 + 1e-12)
    assert lyap_operator_norm([[0.5]]) == pytest.approx(4.0 / 3.0)


def test_riccati_bound_zero_perturbation(small_system):
    sol = solve_dare(small_system.A, small_system.B, small_system.Q, small_system.R)
    weight = small_system.R + small_system.B.T @ sol.P @ small_system.B
    A_cl = small_system.A + small_system.B @ sol.K
    assert riccati_sensitivity_bound(A_cl, weight, np.zeros_like(sol.K)) == 0.0


def test_riccati_bound_scales_quadratically(small_system):
    sol = solve_dare(small_system.A, small_system.B, small_system.Q, small_system.R)
    A_cl = small_system.A + small_system.B @ sol.K
    dK = np.full(sol.K.shape, 0.01)
    once = riccati_sensitivity_bound(A_cl, small_system.R, dK)
    twice = riccati_sensitivity_bound(A_cl, small_system.R, 2 * dK)
    assert twice == pytest.approx(4 * once)


@pytest.mark.parametrize("delta", [0.05, -0.1, 0.3])
def test_riccati_bound_holds_for_scalar_plant(scalar_system, delta):
    K_hat = np.array([[SCALAR_K + delta]])
    weight = scalar_system.R + SCALAR_P * scalar_system.B.T @ scalar_system.B
    A_cl = scalar_system.A + scalar_system.B @ K_hat
    actual = abs(policy_value_matrix(scalar_system, K_hat)[0, 0] - SCALAR_P)
    assert actual <= riccati_sensitivity_bound(A_cl, weight, [[delta]]) * (1 + 1e-9)


def test_noisy_policy_cost_adds_exploration_terms(symmetric_system):
    K = -0.2 * np.eye(2)
    sigma2 = 0.3
    P_K = policy_value_matrix(symmetric_system, K)
    expected = policy_cost(symmetric_system, K) + sigma2 * (np.trace(P_K) + 2.0)
    assert noisy_policy_cost(symmetric_system, K, sigma2) == pytest.approx(expected)
    assert noisy_policy_cost(symmetric_system, K, 0.0) == pytest.approx(policy_cost(symmetric_system, K))
