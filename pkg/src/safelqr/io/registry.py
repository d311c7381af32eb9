"""Artifact formats keyed by the type of the artifact.

An experiment produces a handful of artifact kinds: the plant (system JSON),
trajectories and convergence curves (CSV), configurations and reports (JSON).
Each kind registers a save function and a load function under the dotted
name of its class. The names land in ``report.json``, which is how a report
written in one process is reloaded in another.
"""

from pathlib import Path
from typing import Any, Callable

Saver = Callable[[Any, Path], Path]
Loader = Callable[[str, Path], Any]

_SAVERS: dict[str, Saver] = {}
_LOADERS: dict[str, Loader] = {}
# artifact class name -> name of the class whose saver handles it
_SAVER_FOR: dict[str, str] = {}


def type_key(cls: type) -> str:
    """Dotted ``module.QualName`` of ``cls``, as stored in reports."""
    return f"{cls.__module__}.{cls.__qualname__}"


def register(cls: type, *, writer: Saver, reader: Loader) -> None:
    """Install the save and load functions of one artifact kind.

    Args:
        cls: Artifact class, e.g. ``LinearSystem`` or ``Curves``.
        writer: ``(artifact, stem)`` -> path actually written; the function
            picks the suffix (``.json``, ``.csv``).
        reader: ``(artifact_key, path)`` -> artifact.
    """
    _SAVERS[type_key(cls)] = writer
    _LOADERS[type_key(cls)] = reader
    _SAVER_FOR.clear()


def _saver_key(cls: type) -> str:
    key = type_key(cls)
    if key not in _SAVER_FOR:
        owner = next((type_key(base) for base in cls.__mro__ if type_key(base) in _SAVERS), None)
        if owner is None:
            raise TypeError(f"{key} is not a known artifact kind (system, trajectory, curves, config or report)")
        _SAVER_FOR[key] = owner
    return _SAVER_FOR[key]


def write(obj: Any, file_path: Path) -> list[str]:
    """Save an artifact next to the report.

    Subclasses of a registered kind use that kind's saver, so every pydantic
    settings model is saved as JSON through the ``BaseModel`` entry.

    Args:
        obj: Artifact to save.
        file_path: Path stem inside the report directory.

    Returns:
        list[str]: ``[saver_key, artifact_key, file_name]`` as recorded under
        ``files`` in ``report.json``.

    Raises:
        TypeError: If ``obj`` is not a registered artifact kind.
    """
    saver = _saver_key(type(obj))
    written = _SAVERS[saver](obj, Path(file_path))
    return [saver, type_key(type(obj)), Path(written).name]


def read(writer_key: str, root_key: str, file_path: Path) -> Any:
    """Load an artifact from the entry :func:`write` recorded for it.

    Raises:
        TypeError: If ``writer_key`` names no registered artifact kind.
    """
    if writer_key not in _LOADERS:
        raise TypeError(f"Cannot load {file_path}: no artifact kind {writer_key!r} is registered")
    return _LOADERS[writer_key](root_key, Path(file_path))


def writable(cls: type):
    """Register the decorated ``(artifact, stem) -> Path`` function as a saver."""

    def decorator(fn: Saver) -> Saver:
        _SAVERS[type_key(cls)] = fn
        _SAVER_FOR.clear()
        return fn

    return decorator


def readable(cls: type):
    """Register the decorated ``(artifact_key, path)`` function as a loader."""

    def decorator(fn: Loader) -> Loader:
        _LOADERS[type_key(cls)] = fn
        return fn

    return decorator
