import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

import safelqr.control.dual as dual
from safelqr.control.algebra import solve_dare
from safelqr.control.dual import (
    DualControlConfig,
    run_certainty_equivalence,
    run_safe,
    schedule_points,
    snapshot_points,
    update_gain,
)
from safelqr.control.evaluation import fit_power_law
from safelqr.control.policy import SafePolicy
from safelqr.control.reconstruction import ProbeBattery
from safelqr.control.system import LinearSystem, random_stable_system, true_markov
from safelqr.errors import DareFailureError, InvalidArgumentError, UnstableArgumentError


def test_schedule_points():
    assert schedule_points(1000) == [1, 3, 10, 31, 100, 316, 1000]
    assert schedule_points(50, start=5) == [10, 31]
    assert schedule_points(0) == []


def test_snapshot_points_include_schedule_and_final_step():
    points = snapshot_points(500, 5, 2, schedule=[10, 31, 100, 316])
    assert points[-1] == 500
    assert {10, 31, 100, 316} <= set(points)
    assert min(points) >= 5
    assert snapshot_points(20, 5, 0) == [20]


@pytest.fixture
def battery(rng):
    return ProbeBattery.draw(50, 5, 2, rng)


def test_update_gain_with_exact_markov_parameters(small_system, battery):
    optimal = solve_dare(small_system.A, small_system.B, small_system.Q, small_system.R)
    update = update_gain(true_markov(small_system, 5), small_system.Q, small_system.R, battery)
    assert update.fallback is None
    assert_allclose(update.K, optimal.K, atol=1e-6)
    assert_allclose(update.A, small_system.A, atol=1e-6)


def test_update_gain_with_zero_markov_parameters(battery):
    update = update_gain([np.zeros((3, 2))] * 5, np.eye(3), np.eye(2), battery)
    assert update.fallback is None
    assert_array_equal(update.K, np.zeros((2, 3)))


def test_update_gain_falls_back_on_bad_estimates(battery):
    H = [np.full((3, 2), np.nan)] * 5
    update = update_gain(H, np.eye(3), np.eye(2), battery)
    assert update.fallback is not None
    assert_array_equal(update.K, np.zeros((2, 3)))


def test_update_gain_falls_back_on_riccati_failure(small_system, battery, monkeypatch):
    def failing(*args, **kwargs):
        raise DareFailureError("no stabilizing solution")

    monkeypatch.setattr(dual, "solve_dare", failing)
    update = update_gain(true_markov(small_system, 5), small_system.Q, small_system.R, battery)
    assert update.fallback.startswith("DareFailureError")
    assert_array_equal(update.K, np.zeros((2, 3)))
    assert update.A is not None


def _config(**kwargs):
    options = {"beta": 0.25, "total_steps": 500, "n_probes": 20, "seed": 3, "full_record": True}
    options.update(kwargs)
    return DualControlConfig(**options)


def test_run_safe_smoke(small_system):
    run = run_safe(small_system, _config())
    summary = run.summary
    assert not summary.diverged
    assert summary.steps_completed == 500
    assert summary.gain_updates == 4
    assert summary.fallback_events == 0
    assert summary.max_exploit_ratio <= 1.0
    record = run.record
    assert len(record) == 500
    assert_array_equal(record.k, np.arange(500))
    assert_allclose(record.scale, (record.k + 1.0) ** -0.25)
    assert_allclose(record.u, record.u_tilde + record.scale[:, None] * record.zeta)
    assert_allclose(record.u_tilde[:5], 0.0)
    assert [s.k for s in run.snapshots] == sorted(s.k for s in run.snapshots)
    assert run.snapshots[-1].k == 500
    assert math.isfinite(run.snapshots[-1].A_err)


def test_exploitation_respects_the_threshold(small_system):
    run = run_safe(small_system, _config(total_steps=2000))
    record = run.record
    acting = np.linalg.norm(record.u_tilde, axis=1) > 0.0
    k = record.k[acting]
    assert np.all(record.safesteps[acting] == 0)
    assert np.all(record.norm_x[acting] < np.log(np.maximum(k, 1)))
    assert np.all(np.linalg.norm(record.u_tilde[acting], axis=1) <= np.log(k) ** 2)


def test_run_safe_is_deterministic(small_system):
    first = run_safe(small_system, _config())
    second = run_safe(small_system, _config())
    assert_array_equal(first.record.x, second.record.x)
    assert_array_equal(first.final_K, second.final_K)
    assert first.summary.model_dump(exclude={"elapsed"}) == second.summary.model_dump(exclude={"elapsed"})


def test_different_seeds_give_different_runs(small_system):
    first = run_safe(small_system, _config(seed=1))
    second = run_safe(small_system, _config(seed=2))
    assert not np.array_equal(first.record.x, second.record.x)


def test_frozen_destabilizing_gain(scalar_system):
    # 0.5 + 0.7 = 1.2 in closed loop
    config = _config(total_steps=2000, frozen_gain=[[0.7]], full_record=False)
    ce = run_certainty_equivalence(scalar_system, config)
    assert ce.summary.diverged or ce.summary.max_state_norm > 1e6
    assert ce.summary.diverged_step is None or ce.summary.diverged_step <= 2000
    safe = run_safe(scalar_system, config)
    assert not safe.summary.diverged
    assert safe.summary.max_state_norm < 100.0
    assert_allclose(safe.final_K, [[0.7]])
    assert safe.summary.triggers > 0


@pytest.mark.slow
def test_frozen_destabilizing_gain_over_a_long_horizon(scalar_system):
    config = _config(total_steps=100_000, frozen_gain=[[0.7]], full_record=False)
    safe = run_safe(scalar_system, config)
    assert not safe.summary.diverged
    assert safe.summary.steps_completed == 100_000
    assert safe.summary.max_state_norm < 100.0
    assert safe.summary.max_exploit_ratio <= 1.0
    ce = run_certainty_equivalence(scalar_system, config)
    assert ce.summary.diverged or ce.summary.max_state_norm > 1e6


def test_safe_run_replays_through_the_safe_policy(scalar_system):
    run = run_safe(scalar_system, _config(total_steps=2000, frozen_gain=[[0.7]]))
    record = run.record
    policy = SafePolicy(K=[[0.7]], beta=0.25)
    for i in np.flatnonzero(record.k[:-1] >= 2):
        u_tilde, xi = policy.exploit(record.x[i][None, :], record.safesteps[i : i + 1], int(record.k[i]))
        assert_allclose(u_tilde[0], record.u_tilde[i])
        assert xi[0] == record.safesteps[i + 1]
    assert run.summary.triggers > 0


def test_certainty_equivalence_scale(small_system):
    run = run_certainty_equivalence(small_system, _config())
    main = run.record.k >= 5
    assert_allclose(run.record.scale[main], run.record.k[main] ** -0.25)
    assert run.summary.scheme == "ce"


def test_beta_endpoints_need_sweep():
    with pytest.raises(ValidationError):
        DualControlConfig(beta=0.0, total_steps=10)
    with pytest.raises(ValidationError):
        DualControlConfig(beta=0.5, total_steps=10)
    assert DualControlConfig(beta=0.0, total_steps=10, sweep=True).beta == 0.0


def test_undecayed_exploration_keeps_a_cost_gap(small_system):
    run = run_safe(small_system, _config(beta=0.0, sweep=True, total_steps=1000, full_record=False))
    trace_R = float(np.trace(small_system.R))
    assert run.snapshots
    for snapshot in run.snapshots:
        assert snapshot.deployed_cost - run.summary.J_star >= trace_R - 1e-9


def test_schedule_must_increase():
    with pytest.raises(ValidationError):
        DualControlConfig(total_steps=10, schedule=[5, 5])


def test_warmup_too_short(small_system):
    with pytest.raises(InvalidArgumentError):
        run_safe(small_system, _config(warmup_steps=2))


def test_unstable_plant_is_rejected():
    sys = LinearSystem.from_arrays(A=[[1.1]], B=[[1.0]])
    with pytest.raises(UnstableArgumentError):
        run_safe(sys, _config())


def test_frozen_gain_shape_is_checked(small_system):
    with pytest.raises(InvalidArgumentError):
        run_safe(small_system, _config(frozen_gain=[[0.1]]))


def test_failed_updates_are_recorded(small_system, monkeypatch):
    def failing(*args, **kwargs):
        raise DareFailureError("no stabilizing solution")

    monkeypatch.setattr(dual, "solve_dare", failing)
    run = run_safe(small_system, _config())
    assert run.summary.fallback_events == run.summary.gain_updates == 4
    assert [event.k for event in run.fallbacks] == [10, 31, 100, 316]
    assert_array_equal(run.final_K, np.zeros((2, 3)))


@pytest.mark.slow
def test_markov_error_decays_at_the_expected_rate():
    sys = random_stable_system(3, 2, 0.9, np.random.default_rng(7))
    curves = []
    for seed in range(10):
        run = run_safe(sys, DualControlConfig(beta=0.25, total_steps=1_000_000, seed=seed))
        assert not run.summary.diverged
        assert run.summary.max_exploit_ratio <= 1.0
        curves.append({s.k: s.H_err[0] for s in run.snapshots})
    ks = sorted(k for k in curves[0] if k >= 1000)
    median = [(k, float(np.median([c[k] for c in curves]))) for k in ks]
    fit = fit_power_law(median)
    assert -0.45 <= fit.slope <= -0.10
    assert median[-1][1] <= median[0][1] / 5


@pytest.mark.slow
def test_final_gain_is_near_optimal():
    sys = random_stable_system(3, 2, 0.9, np.random.default_rng(7))
    gaps = []
    for seed in range(10):
        run = run_safe(sys, DualControlConfig(beta=0.25, total_steps=1_000_000, seed=seed, probes_per_decade=0))
        gaps.append((run.summary.final_gain_cost - run.summary.J_star) / run.summary.J_star)
    assert np.median(gaps) <= 0.10
