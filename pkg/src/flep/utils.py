"""Shared helpers: exception hierarchy, logging setup, hashing and atomic file writes."""

import hashlib
import json
import logging
import os
import time
from pathlib import Path
from typing import Any

from rich.logging import RichHandler
from typing_extensions import Self


class FlepError(Exception):
    """Base class for every error raised on purpose by flep."""

    def __init__(self, message: str = "flep error") -> None:
        """Initialize the exception with a custom or default message."""
        super().__init__(message)
        self.message = message


class DomainError(FlepError, ValueError):
    """A precondition of a pure function is violated (bad argument)."""


class NonFiniteFieldError(DomainError):
    """A field contains NaN or Inf samples."""

    def __init__(self, message: str = "non-finite field") -> None:
        super().__init__(message)


class GridMismatchError(DomainError):
    """Two fields that have to share a grid do not."""

    def __init__(
        self, message: str = "fields live on different grids"
    ) -> None:
        super().__init__(message)


class ConfigError(FlepError, ValueError):
    """Invalid configuration. Carries every violation, not just the first."""

    def __init__(
        self, violations: list[str] | str, message: str | None = None
    ) -> None:
        """Initialize the exception with a list of violations.

        Args:
            violations --- field paths and messages, one per violation.
            message --- optional headline, defaults to an enumeration.
        """
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        if message is None:
            message = "invalid configuration:\n  - " + "\n  - ".join(
                self.violations
            )
        super().__init__(message)


class AssumptionError(ConfigError):
    """A coefficient family violates one of the assumptions (V1)-(V4), (M1)-(M2)."""


class NumericalError(FlepError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy result."""


class ConvergenceError(NumericalError):
    """An iteration did not reach its tolerance in the allowed budget."""

    def __init__(
        self, message: str, history: list[float] | None = None
    ) -> None:
        """Initialize the exception with the residual history.

        Args:
            message --- what did not converge.
            history --- residuals (or energies) recorded along the iteration.
        """
        super().__init__(message)
        self.history = list(history or [])


class TrivialFixedPointError(NumericalError):
    """The ground-state iteration collapsed to the zero field."""

    def __init__(self, message: str = "trivial fixed point") -> None:
        super().__init__(message)


class EnergyUnboundedError(NumericalError):
    """The constrained energy runs off to minus infinity (supercritical a)."""

    def __init__(self, message: str = "energy unbounded") -> None:
        super().__init__(message)


class NotCriticalPointError(NumericalError):
    """The two Lagrange multiplier formulas disagree."""

    def __init__(self, message: str = "not a critical point") -> None:
        super().__init__(message)


class ResolutionError(NumericalError):
    """The grid does not resolve the requested quantity."""


class NonRealOutputError(NumericalError):
    """A spectral operator produced a large imaginary residue."""

    def __init__(self, message: str = "non-real output") -> None:
        super().__init__(message)


class NoConcentrationError(NumericalError):
    """A field has no distinguished peak."""

    def __init__(self, message: str = "no concentration") -> None:
        super().__init__(message)


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Route all flep loggers through a single rich handler.

    Args:
        verbose --- log DEBUG messages (solver iterations).
        quiet --- only log warnings and errors.
    """
    level = logging.INFO
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING

    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(
        RichHandler(show_path=False, rich_tracebacks=True, markup=False)
    )
    root.setLevel(level)


def canonical_json(payload: Any) -> str:
    """Serialize a JSON payload with sorted keys and no whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def sha256_hex(payload: Any) -> str:
    """Hash a JSON payload by its canonical serialization."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


class AtomicWriter:
    """Write a file through a temporary sibling and rename it into place.

    Interrupted writes never leave a truncated artifact behind.
    """

    def __init__(self, path: str | Path, mode: str = "w") -> None:
        """Initialize the writer.

        Args:
            path --- final destination of the artifact.
            mode --- "w" for text or "wb" for binary output.
        """
        if mode not in ("w", "wb"):
            raise ValueError(f"Unsupported mode '{mode}'.")
        self.path = Path(path)
        self.tmp_path = self.path.with_name(self.path.name + ".tmp")
        self.mode = mode
        self._handle = None

    def __enter__(self) -> Self:
        """Open the temporary file and return self."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.mode == "w":
            self._handle = open(self.tmp_path, "w", newline="")
        else:
            self._handle = open(self.tmp_path, "wb")
        return self

    def write(self, data: str | bytes) -> None:
        self._handle.write(data)

    def __exit__(self, exc_type: Any, *args: Any) -> None:
        """Rename the temporary file on success, remove it on failure."""
        self._handle.flush()
        os.fsync(self._handle.fileno())
        self._handle.close()
        if exc_type is None:
            os.replace(self.tmp_path, self.path)
        else:
            self.tmp_path.unlink(missing_ok=True)


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write a text artifact atomically."""
    with AtomicWriter(path, "w") as writer:
        writer.write(text)


def write_bytes_atomic(path: str | Path, data: bytes) -> None:
    """Write a binary artifact atomically."""
    with AtomicWriter(path, "wb") as writer:
        writer.write(data)


class Stopwatch:
    """Context manager that records the wall time of a phase into a dict."""

    def __init__(self, timings: dict[str, float], phase: str) -> None:
        self.timings = timings
        self.phase = phase
        self._start = 0.0

    def __enter__(self) -> Self:
        self._start = time.perf_counter()
        return self

    def __exit__(self, *args: Any) -> None:
        elapsed = time.perf_counter() - self._start
        self.timings[self.phase] = self.timings.get(self.phase, 0.0) + elapsed
