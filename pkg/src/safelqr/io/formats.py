"""File formats of the experiment artifacts.

* systems: JSON ``{"n", "p", "A", "B", "W", "X0", "Q", "R"}`` with row-major
  nested lists; omitted covariances and weights default to identity,
* trajectories: CSV with header ``k,norm_x,norm_u,safesteps,gain_id`` and,
  for full records, the exploration scale and every vector component,
* curves: long-format CSV ``series,k,value`` ready for an external plotter,
* reports: JSON with non-finite numbers written as the strings ``"inf"``,
  ``"-inf"`` and ``"nan"``.

Each format is registered with :mod:`safelqr.io.registry`.
"""

import csv
import importlib
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field

from safelqr.config import PathType
from safelqr.control.system import LinearSystem, TrajectoryRecord
from safelqr.errors import InvalidArgumentError
from safelqr.io.registry import readable, writable

MATRIX_FIELDS = ("A", "B", "W", "X0", "Q", "R")
TRAJECTORY_COLUMNS = ["k", "norm_x", "norm_u", "safesteps", "gain_id"]
CURVE_COLUMNS = ["series", "k", "value"]


def load_object(path: str):
    """Import ``"package.module.QualName"`` and return the named object."""
    parts = path.split(".")
    for i in range(len(parts), 0, -1):
        try:
            obj = importlib.import_module(".".join(parts[:i]))
            break
        except ModuleNotFoundError:
            continue
    else:
        raise ImportError(f"Cannot import any module from {path}")
    for attr in parts[i:]:
        obj = getattr(obj, attr)
    return obj


def format_value(value: float) -> str:
    """Text form of a number; non-finite values become ``inf``, ``-inf`` or ``nan``."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value.is_integer() and abs(value) < 2**53:
        return str(int(value))
    return repr(value)


def sanitize(obj: Any) -> Any:
    """Convert numpy values and non-finite floats into plain JSON values."""
    if isinstance(obj, BaseModel):
        return sanitize(obj.model_dump())
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else format_value(obj)
    return obj


# Systems


def system_to_dict(sys: LinearSystem) -> dict:
    data = {"n": sys.n, "p": sys.p}
    data.update({name: getattr(sys, name).tolist() for name in MATRIX_FIELDS})
    return data


def system_from_dict(data: dict, require_stable: bool = False) -> LinearSystem:
    """Build a :class:`LinearSystem` from the system-file mapping.

    Raises:
        InvalidArgumentError: If ``A`` or ``B`` is missing, a key is unknown, or
            ``n``/``p`` disagree with the matrices.
        UnstableArgumentError: If ``require_stable`` and ``A`` is not stable.
    """
    unknown = set(data) - set(MATRIX_FIELDS) - {"n", "p"}
    if unknown:
        raise InvalidArgumentError(f"Unknown keys in system file: {sorted(unknown)}")
    for name in ("A", "B"):
        if name not in data:
            raise InvalidArgumentError(f"System file must define {name}.")
    sys = LinearSystem.from_arrays(**{name: data[name] for name in MATRIX_FIELDS if name in data})
    if data.get("n", sys.n) != sys.n or data.get("p", sys.p) != sys.p:
        raise InvalidArgumentError(
            f"System file declares n={data.get('n')}, p={data.get('p')} but its matrices give n={sys.n}, p={sys.p}."
        )
    if require_stable:
        sys.require_stable()
    return sys


def write_system(sys: LinearSystem, file_path: PathType) -> Path:
    file_path = Path(file_path)
    file_path.write_text(json.dumps(system_to_dict(sys), indent=2))
    return file_path


def read_system(file_path: PathType, require_stable: bool = False) -> LinearSystem:
    """Load a system file.

    Raises:
        InvalidArgumentError: If the file is not valid JSON or describes an
            invalid system.
    """
    try:
        data = json.loads(Path(file_path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{file_path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"{file_path} must contain a JSON object.")
    return system_from_dict(data, require_stable=require_stable)


@writable(LinearSystem)
def _system_writer(sys: LinearSystem, file_path: Path) -> Path:
    return write_system(sys, file_path.with_suffix(".json"))


@readable(LinearSystem)
def _system_reader(root_key: str, file_path: Path) -> LinearSystem:
    return read_system(file_path)


# Trajectories


def _vector_columns(record: TrajectoryRecord) -> list[str]:
    columns = ["scale"]
    for name in ("x", "u", "u_tilde", "zeta"):
        width = getattr(record, name).shape[1]
        columns += [f"{name}_{i}" for i in range(width)]
    return columns


def write_trajectory(record: TrajectoryRecord, file_path: PathType, full: bool | None = None) -> Path:
    """Write a trajectory record as CSV.

    Args:
        record: Record to export.
        file_path: Target CSV path.
        full: Add the scale and vector columns. Defaults to whether the
            record stores full vectors.
    """
    full = record.full if full is None else full
    if full and not record.full:
        raise InvalidArgumentError("Full-state columns need a record allocated with full=True.")
    file_path = Path(file_path)
    size = len(record)
    header = TRAJECTORY_COLUMNS + (_vector_columns(record) if full else [])
    with file_path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=header)
        writer.writeheader()
        for i in range(size):
            row = {
                "k": int(record.k[i]),
                "norm_x": format_value(record.norm_x[i]),
                "norm_u": format_value(record.norm_u[i]),
                "safesteps": int(record.safesteps[i]),
                "gain_id": int(record.gain_id[i]),
            }
            if full:
                row["scale"] = format_value(record.scale[i])
                for name in ("x", "u", "u_tilde", "zeta"):
                    for j, value in enumerate(getattr(record, name)[i]):
                        row[f"{name}_{j}"] = format_value(value)
            writer.writerow(row)
    return file_path


def _stack(rows: list[dict], prefix: str) -> np.ndarray | None:
    if not rows:
        return None
    columns = []
    while f"{prefix}_{len(columns)}" in rows[0]:
        columns.append(f"{prefix}_{len(columns)}")
    return np.array([[float(row[c]) for c in columns] for row in rows])


def read_trajectory(file_path: PathType, stride: int = 1) -> TrajectoryRecord:
    """Load a trajectory CSV back into a :class:`TrajectoryRecord`.

    Records exported without full-state columns get ``nan`` scales and no
    vectors.
    """
    with Path(file_path).open(newline="") as f:
        reader = csv.DictReader(f)
        missing = set(TRAJECTORY_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise InvalidArgumentError(f"{file_path} lacks trajectory columns {sorted(missing)}")
        rows = list(reader)
    full = bool(rows) and "scale" in rows[0]
    record = TrajectoryRecord(
        stride=stride,
        k=np.array([int(r["k"]) for r in rows], dtype=np.int64),
        norm_x=np.array([float(r["norm_x"]) for r in rows]),
        norm_u=np.array([float(r["norm_u"]) for r in rows]),
        safesteps=np.array([int(r["safesteps"]) for r in rows], dtype=np.int64),
        gain_id=np.array([int(r["gain_id"]) for r in rows], dtype=np.int64),
        scale=np.array([float(r["scale"]) for r in rows]) if full else np.full(len(rows), np.nan),
        x=_stack(rows, "x") if full else None,
        u=_stack(rows, "u") if full else None,
        u_tilde=_stack(rows, "u_tilde") if full else None,
        zeta=_stack(rows, "zeta") if full else None,
    )
    record._size = len(rows)
    return record


@writable(TrajectoryRecord)
def _trajectory_writer(record: TrajectoryRecord, file_path: Path) -> Path:
    return write_trajectory(record, file_path.with_suffix(".csv"))


@readable(TrajectoryRecord)
def _trajectory_reader(root_key: str, file_path: Path) -> TrajectoryRecord:
    return read_trajectory(file_path.with_suffix(".csv"))


# Curves


class Curves(BaseModel):
    """Named ``(k, value)`` series, written as one long-format CSV."""

    series: dict[str, list[tuple[float, float]]] = Field(
        default_factory=dict, description="Points of each series in increasing k."
    )

    def add(self, name: str, ks, values) -> "Curves":
        self.series[name] = [(float(k), float(v)) for k, v in zip(ks, values)]
        return self

    def __getitem__(self, name: str) -> list[tuple[float, float]]:
        return self.series[name]

    def __contains__(self, name: str) -> bool:
        return name in self.series


def write_curves(curves: Curves, file_path: PathType) -> Path:
    file_path = Path(file_path)
    with file_path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CURVE_COLUMNS)
        writer.writeheader()
        for name, points in curves.series.items():
            for k, value in points:
                writer.writerow({"series": name, "k": format_value(k), "value": format_value(value)})
    return file_path


def read_curves(file_path: PathType, default_series: str = "curve") -> Curves:
    """Read a long-format ``series,k,value`` CSV or a two-column ``k,value`` CSV.

    A two-column file yields a single series named ``default_series``. A
    header row is optional for two-column files.

    Raises:
        InvalidArgumentError: If the file has neither layout.
    """
    with Path(file_path).open(newline="") as f:
        rows = [row for row in csv.reader(f) if row]
    if not rows:
        raise InvalidArgumentError(f"{file_path} is empty.")
    header = [c.strip().lower() for c in rows[0]]
    curves = Curves()
    try:
        if header == CURVE_COLUMNS:
            for name, k, value in rows[1:]:
                curves.series.setdefault(name, []).append((float(k), float(value)))
        elif len(header) == 2:
            body = rows[1:] if header[0] == "k" else rows
            curves.series[default_series] = [(float(k), float(value)) for k, value in body]
        else:
            raise InvalidArgumentError(
                f"{file_path} must have columns series,k,value or two columns k,value; got {rows[0]}"
            )
    except ValueError as exc:
        if isinstance(exc, InvalidArgumentError):
            raise
        raise InvalidArgumentError(f"{file_path} holds a malformed row: {exc}") from exc
    return curves


@writable(Curves)
def _curves_writer(curves: Curves, file_path: Path) -> Path:
    return write_curves(curves, file_path.with_suffix(".csv"))


@readable(Curves)
def _curves_reader(root_key: str, file_path: Path) -> Curves:
    return read_curves(file_path.with_suffix(".csv"))


# Reports


def write_report(report: dict, file_path: PathType) -> Path:
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_text(json.dumps(sanitize(report), indent=2, sort_keys=True))
    return file_path


def read_report(file_path: PathType) -> dict:
    return json.loads(Path(file_path).read_text())


@writable(dict)
def _report_writer(report: dict, file_path: Path) -> Path:
    return write_report(report, file_path.with_suffix(".json"))


@readable(dict)
def _report_reader(root_key: str, file_path: Path) -> dict:
    return read_report(file_path.with_suffix(".json"))


@writable(BaseModel)
def _model_writer(model: BaseModel, file_path: Path) -> Path:
    return write_report(model.model_dump(), file_path.with_suffix(".json"))


@readable(BaseModel)
def _model_reader(root_key: str, file_path: Path) -> BaseModel:
    return load_object(root_key).model_validate(read_report(file_path.with_suffix(".json")))
