import os
import pathlib

__version__ = "0.1.0"

PathType = str | pathlib.Path

THREADS_ENV = "SAFE_LQR_THREADS"


class Paths:
    """Well-known locations.

    Attributes:
        module (pathlib.Path): Installed package directory.
        cwd (pathlib.Path): Working directory at import time.
        reports (pathlib.Path): Default parent of experiment report folders.
    """

    module = pathlib.Path(__file__).parent.absolute()
    cwd = pathlib.Path.cwd()
    reports = cwd / "safelqr_reports"


PATH = Paths()


def max_workers(requested: int | None = None) -> int:
    """Number of replicate worker processes to use.

    Args:
        requested: Explicit request (e.g. from ``--workers``). Takes precedence
            over the environment.

    Returns:
        int: ``requested`` if given, else ``SAFE_LQR_THREADS`` if set, else the
        number of available cores.
    """
    if requested is not None:
        return max(int(requested), 1)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}")
    return os.cpu_count() or 1
