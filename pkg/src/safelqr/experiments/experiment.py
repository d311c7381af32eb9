"""Experiment base classes, seeding and the replicate runner.

An :class:`Experiment` wraps one command. Subclasses implement :meth:`_run`
and return an :class:`ExperimentResult`; :meth:`Experiment.run` writes the
file-backed results through the IO registry and the JSON report that ties
them to the configuration.
"""

import hashlib
import json
import logging
import time
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Callable, Iterable

from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from safelqr.config import PATH, __version__, max_workers
from safelqr.experiments.settings import ExperimentConfig
from safelqr.io import read, read_report, sanitize, write, write_report

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
TIMING_FIELDS = ("timing", "elapsed", "files")


def get_key(hashable: Any) -> str:
    """SHA256 of the canonical JSON form of ``hashable``."""
    dumped = json.dumps(sanitize(hashable), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(dumped.encode("utf-8")).hexdigest()


def derive_seed(*parts: Any) -> int:
    """64-bit seed mixed from ``parts``.

    The seed is the first eight bytes (big endian) of the SHA256 digest of the
    canonical JSON list of ``parts``; replicate ``r`` at beta index ``b`` under
    master seed ``s`` uses ``derive_seed(s, r, b)``.
    """
    return int.from_bytes(bytes.fromhex(get_key(list(parts)))[:8], "big")


class RunOptions(BaseModel):
    """Runtime options that do not change results."""

    output: Path = Field(PATH.reports, description="Directory receiving the report and artifacts.")
    workers: int | None = Field(None, ge=1, description="Worker processes; default SAFE_LQR_THREADS or all cores.")
    progress: bool = Field(False, description="Track replicate progress with tqdm.")

    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ExperimentResult(BaseModel):
    """Results of one experiment.

    Attributes:
        summary: JSON-serializable values embedded in the report.
        file: Artifacts written to disk through the IO registry.
        passed: Whether every invariant checked by the experiment held.
    """

    summary: dict[str, Any] = Field(default_factory=dict, description="Values embedded in the report.")
    file: dict[str, Any] | None = Field(None, description="Results saved to files using the IO registry.")
    passed: bool = Field(True, description="Whether the experiment's checks held.")

    def __getitem__(self, key: str) -> Any:
        if key in self.summary:
            return self.summary[key]
        return self.file[key]

    def to_file(self, directory: Path) -> dict[str, list[str]] | None:
        """Write file-backed results into ``directory``.

        Returns:
            dict[str, list[str]] | None: For each key, the registry keys and
            file name needed by :meth:`from_file`.
        """
        if self.file is None:
            return None
        directory.mkdir(parents=True, exist_ok=True)
        return {key: write(value, directory / key) for key, value in self.file.items()}

    def from_file(self, directory: Path, file_schema: dict[str, list[str]] | None) -> None:
        """Load file-backed results written by :meth:`to_file`."""
        if file_schema is None:
            self.file = None
            return
        self.file = {
            key: read(writer_key, root_key, directory / name)
            for key, (writer_key, root_key, name) in file_schema.items()
        }


class Experiment(ABC, BaseModel):
    """One command run against a validated configuration."""

    name: str = Field(..., description="Command name, also written to the report.")
    config: ExperimentConfig = Field(..., description="Validated configuration.")

    @abstractmethod
    def _run(self, options: RunOptions) -> ExperimentResult:
        """Perform the experiment and return its summary and artifacts."""
        raise NotImplementedError

    def run(self, options: RunOptions | None = None) -> tuple[dict, Path]:
        """Run the experiment and write its report.

        Returns:
            tuple[dict, Path]: The report as written and its path.
        """
        options = RunOptions() if options is None else options
        started = time.perf_counter()
        logger.info("Running %s (seed %d)", self.name, self.config.seed)
        result = self._run(options)
        files = result.to_file(options.output)
        config = self.config.model_dump(mode="json")
        report = {
            "name": self.name,
            "version": __version__,
            "config": config,
            "config_key": get_key(config),
            "passed": result.passed,
            "results": result.summary,
            "files": files,
            "timing": {"elapsed": time.perf_counter() - started},
        }
        path = write_report(report, Path(options.output) / REPORT_NAME)
        logger.info("Report written to %s", path)
        return read_report(path), path


def run_replicates(
    fn: Callable[..., Any],
    tasks: Iterable[tuple],
    workers: int | None = None,
    progress: bool = False,
    desc: str = "replicates",
) -> list[Any]:
    """Evaluate ``fn(*task)`` for every task, in order.

    With one worker the tasks run in this process; otherwise joblib spreads
    them over worker processes. ``fn`` must be importable from a module.
    """
    tasks = list(tasks)
    workers = min(max_workers(workers), max(len(tasks), 1))
    if workers == 1:
        return [fn(*task) for task in tqdm(tasks, desc=desc, disable=not progress)]
    results = Parallel(n_jobs=workers, return_as="generator")(delayed(fn)(*task) for task in tasks)
    return list(tqdm(results, total=len(tasks), desc=desc, disable=not progress))
