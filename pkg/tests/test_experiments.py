import math

import numpy as np
import pytest
from deepdiff import DeepDiff

from safelqr.config import THREADS_ENV, max_workers
from safelqr.errors import InvalidArgumentError, UsageError
from safelqr.experiments import (
    ExperimentConfig,
    RunOptions,
    derive_seed,
    get_key,
    load_config,
    make_experiment,
    run_replicates,
    verify_report,
)
from safelqr.io import read_curves, read_trajectory, write_system

SMALL_RUN = {
    "system.n": 2,
    "system.p": 1,
    "steps": 400,
    "replicates": 2,
    "n_probes": 20,
    "seed": 11,
    "fit_k_min": 10.0,
}


def _square(x, y=0):
    return x * x + y


def test_derive_seed():
    assert derive_seed(7, 0, 0) == derive_seed(7, 0, 0)
    assert derive_seed(7, 0, 0) != derive_seed(7, 1, 0)
    assert derive_seed(7, 0, 1) != derive_seed(7, 1, 0)
    assert 0 <= derive_seed(7, "system") < 2**64


def test_get_key_ignores_dict_order():
    assert get_key({"a": 1, "b": [1.0, 2.0]}) == get_key({"b": [1.0, 2.0], "a": 1})
    assert get_key({"a": 1}) != get_key({"a": 2})
    assert get_key({"a": math.inf}) == get_key({"a": "inf"})


def test_load_config_from_toml(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(
        'command = "run"\n'
        "betas = [0.1, 0.25]\n"
        "steps = 5000\n"
        "[system]\n"
        "n = 4\n"
        "[validation]\n"
        "samples = 50\n"
    )
    config = load_config(path, {"steps": 2000, "system.p": 3, "seed": None})
    assert config.betas == [0.1, 0.25]
    assert config.steps == 2000
    assert (config.system.n, config.system.p) == (4, 3)
    assert config.validation.samples == 50
    assert config.seed == 0
    assert config.stride == 1
    assert load_config(overrides={"steps": 1_000_000}).stride == 100


@pytest.mark.parametrize(
    "overrides",
    [
        {"betas": [0.6]},
        {"steps": 0},
        {"unknown": 1},
        {"system.rho": 1.0},
        {"oscillation.t": [0]},
        {"command": "fly"},
    ],
)
def test_invalid_configurations(overrides):
    with pytest.raises(UsageError):
        load_config(overrides=overrides)


def test_unreadable_configurations(tmp_path):
    with pytest.raises(UsageError):
        load_config(tmp_path / "missing.toml")
    path = tmp_path / "broken.toml"
    path.write_text("steps = = 3\n")
    with pytest.raises(UsageError):
        load_config(path)


def test_sweep_endpoints_are_accepted():
    assert load_config(overrides={"betas": [0.0, 0.5]}).betas == [0.0, 0.5]


def test_max_workers(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert max_workers() == 3
    assert max_workers(2) == 2
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ValueError):
        max_workers()


def test_run_replicates_keeps_task_order():
    tasks = [(i, 1) for i in range(6)]
    sequential = run_replicates(_square, tasks, workers=1)
    parallel = run_replicates(_square, tasks, workers=2)
    assert sequential == parallel == [i * i + 1 for i in range(6)]


def _run(tmp_path, name, command="run", **overrides):
    config = load_config(overrides={**SMALL_RUN, "command": command, **overrides})
    report, path = make_experiment(config).run(RunOptions(output=tmp_path / name, workers=1))
    return report, path


def test_run_experiment(tmp_path):
    report, path = _run(tmp_path, "run")
    assert path.name == "report.json"
    assert report["passed"]
    assert report["name"] == "run"
    assert report["config"]["steps"] == 400
    (beta,) = report["results"]["betas"]
    assert beta["beta"] == 0.25
    assert beta["diverged"] == 0
    assert beta["max_exploit_ratio"] <= 1.0
    assert len(beta["replicates"]) == 2
    assert beta["curves"]["A_err"]["k"][-1] == 400
    assert beta["slopes"]["A_err"] is not None
    assert set(report["files"]) == {"system", "curves", "trajectory_b0_r0", "trajectory_b0_r1"}

    curves = read_curves(path.parent / "curves.csv")
    assert "beta=0.25/A_err/median" in curves
    record = read_trajectory(path.parent / "trajectory_b0_r0.csv")
    assert len(record) == 400


def test_run_experiment_is_reproducible(tmp_path):
    first, _ = _run(tmp_path, "first")
    second, _ = _run(tmp_path, "second")
    assert not verify_report(second, first)
    assert first["config_key"] == second["config_key"]


def test_seed_changes_the_report(tmp_path):
    first, _ = _run(tmp_path, "first")
    other, _ = _run(tmp_path, "other", seed=12)
    assert verify_report(other, first)


def test_parallel_replicates_match_sequential(tmp_path):
    config = load_config(overrides={**SMALL_RUN, "command": "run"})
    sequential, _ = make_experiment(config).run(RunOptions(output=tmp_path / "seq", workers=1))
    parallel, _ = make_experiment(config).run(RunOptions(output=tmp_path / "par", workers=2))
    assert not verify_report(parallel, sequential)


def test_compare_ce_shares_safe_runs(tmp_path):
    run, _ = _run(tmp_path, "run")
    compare, _ = _run(tmp_path, "compare", command="compare-ce")
    assert compare["passed"]
    rows = compare["results"]["betas"][0]["replicates"]
    assert compare["results"]["betas"][0]["diverged"]["safe"] == 0
    for row, expected in zip(rows, run["results"]["betas"][0]["replicates"]):
        assert row["safe"]["summary"]["scheme"] == "safe"
        assert not DeepDiff(expected, row["safe"]["summary"], exclude_paths=["root['elapsed']"])
        assert row["ce"]["summary"]["scheme"] == "ce"


def test_compare_ce_with_destabilizing_gain(tmp_path, scalar_system):
    system = write_system(scalar_system, tmp_path / "scalar.json")
    # 0.5 + 0.7 = 1.2 in closed loop
    report, _ = _run(tmp_path, "frozen", command="compare-ce", **{"system.path": str(system), "frozen_gain": [[0.7]]})
    diverged = report["results"]["betas"][0]["diverged"]
    assert diverged == {"safe": 0, "ce": 2}


def test_oscillation_experiment(tmp_path):
    report, path = _run(tmp_path, "osc", command="oscillation")
    assert report["passed"]
    traces = report["results"]["traces"]
    assert [trace["t"] for trace in traces] == [1, 2]
    assert all(trace["check"]["passed"] for trace in traces)
    curves = read_curves(path.parent / "trajectories.csv")
    assert len(curves["t=2/norm"]) == 61
    assert curves["t=1/x0"][1] == pytest.approx((1.0, 2.05))


def test_oscillation_without_default_constants_is_not_checked(tmp_path):
    report, _ = _run(tmp_path, "osc", command="oscillation", **{"oscillation.M": 2.0, "oscillation.t": [3]})
    assert report["passed"]
    assert "check" not in report["results"]["traces"][0]


def test_reduced_bound_validation(tmp_path):
    report, _ = _run(tmp_path, "bounds", command="validate-bounds", **{"validation.samples": 10})
    assert report["passed"]
    assert report["results"]["reduced"]
    assert report["results"]["failed"] == []
    assert report["files"] is None


def _write_curve(path, slope):
    ks = np.logspace(2, 6, 41)
    lines = ["k,value"] + [f"{float(k)!r},{float(2.0 * k**slope)!r}" for k in ks]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_rate_fit(tmp_path):
    curve = _write_curve(tmp_path / "curve.csv", -0.25)
    report, path = _run(tmp_path, "fit", command="rate-fit", **{"rate_fit.input": str(curve)})
    fit = report["results"]["fits"]["curve"]
    assert fit["slope"] == pytest.approx(-0.25)
    assert fit["intercept"] == pytest.approx(math.log(2.0))
    fitted = read_curves(path.parent / "fit.csv")
    assert "curve/fitted" in fitted


def test_rate_fit_errors(tmp_path):
    config = load_config(overrides={"command": "rate-fit"})
    with pytest.raises(InvalidArgumentError):
        make_experiment(config).run(RunOptions(output=tmp_path))
    curve = _write_curve(tmp_path / "curve.csv", -0.5)
    config = load_config(overrides={"command": "rate-fit", "rate_fit.input": str(curve), "rate_fit.series": "other"})
    with pytest.raises(InvalidArgumentError):
        make_experiment(config).run(RunOptions(output=tmp_path))


def test_experiment_config_defaults():
    config = ExperimentConfig()
    assert config.command == "run"
    assert config.betas == [0.25]
    assert config.oscillation.t == [1, 2]
    assert config.validation.escape_levels == [7.0, 8.0, 10.0]
