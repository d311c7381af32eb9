import numpy as np
import pytest
from numpy.testing import assert_allclose

from safelqr.control.markov import History, MarkovEstimator, direct_estimate
from safelqr.errors import InvalidArgumentError, UnavailableEstimateError


def test_first_sample():
    est = MarkovEstimator(1, 1, beta=0.25, horizon=2)
    est.ingest([2.0], [1.0], [0.0])
    assert est.k == 1
    assert_allclose(est.estimate(0), [[2.0]])
    with pytest.raises(UnavailableEstimateError):
        est.estimate(1)
    with pytest.raises(UnavailableEstimateError):
        est.estimate_all()


def test_hand_computed_estimates():
    est = MarkovEstimator(1, 1, beta=0.25, horizon=2)
    est.ingest([1.0], [1.0], [0.5], scale=1.0)
    est.ingest([3.0], [2.0], [1.0], scale=1.0)
    H0, H1 = est.estimate_all()
    # H0 = (1*1 + 3*2) / 2; H1 = (3*1 - H0 * 1*1) / 1
    assert_allclose(H0, [[3.5]])
    assert_allclose(H1, [[-0.5]])
    assert_allclose(est.counts, [2, 1])


def test_zero_exploration_gives_zero_estimates(rng):
    est = MarkovEstimator(2, 1, beta=0.1)
    for _ in range(10):
        est.ingest(rng.standard_normal(2), np.zeros(1), rng.standard_normal(1))
    for H in est.estimate_all():
        assert_allclose(H, 0.0)


def _random_history(rng, n, p, k, explicit_scale):
    return History(
        x=rng.standard_normal((k + 1, n)),
        zeta=rng.standard_normal((k, p)),
        u_tilde=rng.standard_normal((k, p)),
        scale=rng.uniform(0.2, 1.0, k) if explicit_scale else None,
    )


@pytest.mark.parametrize("explicit_scale", [False, True])
def test_recursive_matches_direct(rng, explicit_scale):
    for _ in range(10):
        n, p = rng.integers(1, 4, size=2)
        beta = rng.uniform(0.05, 0.45)
        m = n + p
        k = int(rng.integers(m, 4 * m + 10))
        history = _random_history(rng, n, p, k, explicit_scale)
        est = MarkovEstimator(n, p, beta)
        for i in range(1, k + 1):
            scale = history.scale[i - 1] if explicit_scale else None
            est.ingest(history.x[i], history.zeta[i - 1], history.u_tilde[i - 1], scale=scale)
        for tau, H in enumerate(est.estimate_all()):
            expected = direct_estimate(history, tau, beta)
            assert_allclose(H, expected, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(expected).max()))


@pytest.mark.slow
def test_recursive_matches_direct_on_long_histories():
    rng = np.random.default_rng(17)
    for _ in range(50):
        n, p = (int(v) for v in rng.integers(1, 4, size=2))
        beta = float(rng.uniform(0.05, 0.45))
        history = _random_history(rng, n, p, 3000, explicit_scale=False)
        est = MarkovEstimator(n, p, beta)
        for i in range(1, 3001):
            est.ingest(history.x[i], history.zeta[i - 1], history.u_tilde[i - 1])
        for tau, H in enumerate(est.estimate_all()):
            expected = direct_estimate(history, tau, beta)
            assert np.abs(H - expected).max() <= 1e-9 * max(1.0, np.abs(expected).max())


def test_estimator_is_unbiased_on_open_loop(scalar_system):
    beta = 0.25
    replicates, steps = 400, 50
    estimates = np.zeros((replicates, 2))
    rng = np.random.default_rng(21)
    for r in range(replicates):
        est = MarkovEstimator(1, 1, beta)
        x = rng.standard_normal(1)
        for k in range(steps):
            zeta = rng.standard_normal(1)
            x = scalar_system.A @ x + scalar_system.B @ ((k + 1) ** (-beta) * zeta) + rng.standard_normal(1)
            est.ingest(x, zeta, np.zeros(1))
        estimates[r] = [H[0, 0] for H in est.estimate_all()]
    assert_allclose(estimates.mean(axis=0), [1.0, 0.5], atol=0.1)


def test_dimension_errors():
    est = MarkovEstimator(2, 1, beta=0.2)
    with pytest.raises(InvalidArgumentError):
        est.ingest([1.0], [0.0], [0.0])
    with pytest.raises(InvalidArgumentError):
        est.ingest([1.0, 0.0], [0.0, 0.0], [0.0])
    with pytest.raises(InvalidArgumentError):
        est.ingest([1.0, 0.0], [0.0], [0.0], scale=0.0)
    with pytest.raises(InvalidArgumentError):
        est.estimate(3)
    with pytest.raises(InvalidArgumentError):
        MarkovEstimator(0, 1, beta=0.2)


def test_direct_estimate_rejects_short_history(rng):
    history = _random_history(rng, 1, 1, 2, False)
    with pytest.raises(InvalidArgumentError):
        direct_estimate(history, 2, 0.2)
