import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from safelqr.control.dual import DualControlConfig
from safelqr.control.policy import ZeroPolicy
from safelqr.control.system import LinearSystem, simulate
from safelqr.errors import InvalidArgumentError, UnstableArgumentError
from safelqr.io import (
    Curves,
    format_value,
    load_object,
    read,
    read_curves,
    read_system,
    read_trajectory,
    register,
    sanitize,
    system_from_dict,
    system_to_dict,
    type_key,
    write,
    write_curves,
    write_system,
    write_trajectory,
)


def test_system_file_defaults(tmp_path):
    path = tmp_path / "sys.json"
    path.write_text(json.dumps({"A": [[0.5, 0.0], [0.0, 0.2]], "B": [[1.0], [0.0]]}))
    sys = read_system(path)
    assert (sys.n, sys.p) == (2, 1)
    assert_array_equal(sys.W, np.eye(2))
    assert_array_equal(sys.R, np.eye(1))


def test_system_file_round_trip(tmp_path, small_system):
    path = write_system(small_system, tmp_path / "sys.json")
    loaded = read_system(path, require_stable=True)
    for name in ("A", "B", "W", "X0", "Q", "R"):
        assert_array_equal(getattr(loaded, name), getattr(small_system, name))
    assert system_to_dict(loaded)["n"] == 3


@pytest.mark.parametrize(
    "data",
    [
        {"B": [[1.0]]},
        {"A": [[0.5]]},
        {"A": [[0.5]], "B": [[1.0]], "C": [[1.0]]},
        {"A": [[0.5]], "B": [[1.0]], "n": 2},
        {"A": [[0.5, 0.1]], "B": [[1.0]]},
    ],
)
def test_invalid_system_data(data):
    with pytest.raises(InvalidArgumentError):
        system_from_dict(data)


def test_system_file_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(InvalidArgumentError):
        read_system(path)
    path.write_text("[1, 2]")
    with pytest.raises(InvalidArgumentError):
        read_system(path)
    with pytest.raises(UnstableArgumentError):
        system_from_dict({"A": [[1.5]], "B": [[1.0]]}, require_stable=True)


def test_trajectory_csv(tmp_path, scalar_system):
    record = simulate(scalar_system, ZeroPolicy(p=1, noise=0.5), 20, np.random.default_rng(0))
    path = write_trajectory(record, tmp_path / "traj.csv")
    header = path.read_text().splitlines()[0].split(",")
    assert header == ["k", "norm_x", "norm_u", "safesteps", "gain_id", "scale", "x_0", "u_0", "u_tilde_0", "zeta_0"]
    loaded = read_trajectory(path)
    assert len(loaded) == 20
    assert_array_equal(loaded.k, record.k)
    assert_allclose(loaded.x, record.x)
    assert_allclose(loaded.scale, record.scale)


def test_scalar_trajectory_csv(tmp_path, scalar_system):
    record = simulate(scalar_system, ZeroPolicy(p=1), 10, np.random.default_rng(0), full=False)
    path = write_trajectory(record, tmp_path / "traj.csv")
    assert path.read_text().splitlines()[0] == "k,norm_x,norm_u,safesteps,gain_id"
    loaded = read_trajectory(path)
    assert loaded.x is None
    assert np.isnan(loaded.scale).all()
    with pytest.raises(InvalidArgumentError):
        write_trajectory(record, tmp_path / "full.csv", full=True)


def test_trajectory_csv_needs_base_columns(tmp_path):
    path = tmp_path / "traj.csv"
    path.write_text("k,norm_x\n0,1.0\n")
    with pytest.raises(InvalidArgumentError):
        read_trajectory(path)


def test_curves_keep_non_finite_values(tmp_path):
    curves = Curves().add("A_err/median", [1, 10, 100], [1.0, math.inf, 0.25])
    path = write_curves(curves, tmp_path / "curves.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "series,k,value"
    assert lines[2] == "A_err/median,10,inf"
    loaded = read_curves(path)
    assert "A_err/median" in loaded
    assert loaded["A_err/median"][1][1] == math.inf


def test_two_column_curves(tmp_path):
    path = tmp_path / "curve.csv"
    path.write_text("k,value\n1,1.0\n10,0.5\n")
    assert read_curves(path)["curve"] == [(1.0, 1.0), (10.0, 0.5)]
    path.write_text("1,1.0\n10,0.5\n")
    assert read_curves(path, default_series="err")["err"] == [(1.0, 1.0), (10.0, 0.5)]


@pytest.mark.parametrize("text", ["", "a,b,c,d\n1,2,3,4\n", "k,value\n1,abc\n"])
def test_malformed_curves(tmp_path, text):
    path = tmp_path / "curve.csv"
    path.write_text(text)
    with pytest.raises(InvalidArgumentError):
        read_curves(path)


def test_registry_round_trip(tmp_path, small_system):
    keys = write(small_system, tmp_path / "system")
    assert keys[0] == type_key(LinearSystem)
    assert keys[2] == "system.json"
    loaded = read(keys[0], keys[1], tmp_path / keys[2])
    assert_array_equal(loaded.A, small_system.A)

    config = DualControlConfig(total_steps=100, seed=4)
    keys = write(config, tmp_path / "config")
    assert keys[1] == type_key(DualControlConfig)
    assert read(*keys[:2], tmp_path / keys[2]) == config

    keys = write({"value": math.nan}, tmp_path / "report")
    assert read(*keys[:2], tmp_path / keys[2]) == {"value": "nan"}


def test_registry_rejects_unknown_types(tmp_path):
    with pytest.raises(TypeError):
        write(object(), tmp_path / "thing")
    with pytest.raises(TypeError):
        read("builtins.object", "builtins.object", tmp_path / "thing")


def test_load_object():
    assert load_object(type_key(LinearSystem)) is LinearSystem
    with pytest.raises(ImportError):
        load_object("no_such_package.Thing")


def test_format_and_sanitize():
    assert format_value(3.0) == "3"
    assert format_value(-math.inf) == "-inf"
    assert format_value(0.5) == "0.5"
    data = sanitize({"a": np.array([1.0, np.inf]), "b": np.int64(2), "c": (np.bool_(True), None)})
    assert data == {"a": [1.0, "inf"], "b": 2, "c": [True, None]}


class _Marker:
    pass


def test_registering_a_new_artifact_kind(tmp_path):
    def save(obj, stem):
        path = stem.with_suffix(".txt")
        path.write_text("marker")
        return path

    register(_Marker, writer=save, reader=lambda root_key, path: _Marker())
    keys = write(_Marker(), tmp_path / "marker")
    assert keys == [type_key(_Marker), type_key(_Marker), "marker.txt"]
    assert isinstance(read(*keys[:2], tmp_path / keys[2]), _Marker)
    with pytest.raises(TypeError, match="not a known artifact kind"):
        write(1j, tmp_path / "number")
