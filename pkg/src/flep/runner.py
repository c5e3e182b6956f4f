"""This file contains a runner class which executes one experiment and writes its artifacts."""

import json
import logging
import platform
import time
from pathlib import Path
from typing import Any

import numpy as np
import scipy
from commands.command_utils import ExperimentBase
from constants import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, __version__
from print import Printer
from utils import (
    FlepError,
    NumericalError,
    write_bytes_atomic,
    write_text_atomic,
)

logger = logging.getLogger(__name__)


def versions() -> dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "flep": __version__,
    }


def exit_code(error: FlepError) -> int:
    """Map a failure onto the command exit code."""
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


class Runner:
    def __init__(
        self,
        experiment: ExperimentBase,
        report_path: str | Path | None = None,
        printer: Printer | None = None,
    ) -> None:
        """Initialize the runner.

        Args:
            experiment --- experiment which should be run.
            report_path --- where the JSON report goes. Defaults to None (no report).
            printer --- terminal printer. Defaults to a new Printer.
        """
        self.experiment = experiment
        self.report_path = Path(report_path) if report_path else None
        self.printer = printer or Printer()

    def run(self) -> int:
        """Execute the experiment, write artifacts and report, return the exit code."""
        start = time.perf_counter()
        report: dict[str, Any] = {"command": self.experiment.name}
        report.update(self.experiment.hashes)
        report["versions"] = versions()

        code = EXIT_OK
        payload: dict[str, Any] = {}
        try:
            payload = self.experiment.execute()
            report["status"] = "ok"
        except FlepError as error:
            code = exit_code(error)
            report["status"] = "failed"
            report["error"] = str(error)
            report["error_type"] = type(error).__name__
            payload = dict(self.experiment.partial)
            logger.debug("%s failed", self.experiment.name, exc_info=True)
            self.printer.error(error, code)

        report.update(self.experiment.hashes)
        report["result"] = payload
        written = self._write_artifacts()
        report["artifacts"] = written
        report["timings"] = dict(self.experiment.timings)
        report["timings"]["total"] = time.perf_counter() - start
        if self.report_path is not None:
            write_text_atomic(
                self.report_path,
                json.dumps(report, indent=2, default=_json_default) + "\n",
            )
            written.append(str(self.report_path))

        if payload:
            self.experiment.show(self.printer, payload)
        if code == EXIT_OK:
            self.printer.success(self.experiment.name)
        self.printer.artifacts(written)
        return code

    def _write_artifacts(self) -> list[str]:
        """Write all queued artifacts atomically, in order."""
        written = []
        for artifact in self.experiment.artifacts:
            if isinstance(artifact.data, bytes):
                write_bytes_atomic(artifact.path, artifact.data)
            else:
                write_text_atomic(artifact.path, artifact.data)
            logger.debug("wrote %s", artifact.path)
            written.append(str(artifact.path))
        return written
