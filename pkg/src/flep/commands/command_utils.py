import ast
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import typer
from coefficients import RealizedPotential, RealizedWeight
from config import (
    ExperimentConfig,
    config_hash,
    parse_config,
    problem_hash,
)
from constants import DEFAULT_CONFIG
from ground_state import GroundState, certify_ground_state, solve_ground_state
from minimizer import FlowOptions, MinimizationContext
from print import Printer
from spectral_grid import read_field
from utils import ConfigError, Stopwatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Artifact:
    """A file an experiment wants written: text or bytes."""

    path: Path
    data: str | bytes


class ExperimentBase(ABC):
    """ExperimentBase class acts as a base class for all flep commands.

    Subclasses implement `execute`, which returns the report payload and queues
    the files to be written with `emit`. The Runner writes queued artifacts and
    the report, also after a failure, so partial results are kept.

    Args:
        cfg --- validated experiment config, None for flag-only commands.
    """

    name = "experiment"

    @abstractmethod
    def __init__(self, cfg: ExperimentConfig | None = None) -> None:
        self.cfg = cfg
        self.timings: dict[str, float] = {}
        self.artifacts: list[Artifact] = []
        self.hashes: dict[str, str] = {}
        # what is known when execute fails, reported instead of the result
        self.partial: dict[str, Any] = {}
        if cfg is not None:
            self.hashes = {
                "config_hash": config_hash(cfg),
                "problem_hash": problem_hash(cfg),
            }

    @abstractmethod
    def execute(self) -> dict[str, Any]:
        """Run the experiment and return its report payload."""
        pass

    def emit(self, path: str | Path, data: str | bytes) -> None:
        self.artifacts.append(Artifact(Path(path), data))

    def phase(self, name: str) -> Stopwatch:
        """Time a phase of the experiment: `with self.phase("solve"): ...`."""
        return Stopwatch(self.timings, name)

    def show(self, printer: Printer, payload: dict[str, Any]) -> None:
        """Print the result, subclasses add tables."""
        printer.summary(self.name, payload)


def printer_for(ctx: typer.Context) -> Printer:
    """Printer honouring the root --quiet flag."""
    quiet = bool(ctx.obj and ctx.obj.get("quiet"))
    return Printer(quiet=quiet)


def load_config(path: Path | None) -> ExperimentConfig:
    """Parse a config file, falling back to the shipped defaults."""
    if path is None:
        logger.info("no config given, using %s", DEFAULT_CONFIG)
        path = DEFAULT_CONFIG
    return parse_config(path)


def obtain_ground_state(
    cfg: ExperimentConfig, path: Path | None = None
) -> GroundState:
    """Read a stored ground state (hash-checked) or solve for it."""
    grid = cfg.make_grid()
    s = cfg.problem.s
    if path is not None:
        stored = read_field(path)
        expected = problem_hash(cfg)
        if stored.problem_hash is not None and stored.problem_hash != expected:
            raise ConfigError(
                f"{path}: ground state was computed for a different problem"
                f" (hash {stored.problem_hash[:12]} != {expected[:12]})"
            )
        if stored.field.grid != grid or abs(stored.s - s) > 1e-15:
            raise ConfigError(
                f"{path}: ground state grid or order does not match the config"
            )
        logger.info("reusing ground state from %s", path)
        return certify_ground_state(stored.field, s)
    return solve_ground_state(
        grid,
        s,
        tol=cfg.solver.gs_tol,
        max_iter=cfg.solver.max_iter,
        seed=cfg.solver.seed,
        init=cfg.solver.init,
    )


# module-level names every command module defines
COMMAND_CONTRACT = ("name", "short_description", "description", "command_app")


class CommandRegistry:
    """CommandRegistry class acts as registry for the experiment commands."""

    def register_commands(
        self, main_app: typer.main.Typer, command_list: list
    ) -> None:
        """Register commands in typer main app"""
        for name in command_list:
            command_app = self._import_command(
                f"commands.{name}", "command_app"
            )
            if command_app is None:
                logger.warning("command %s could not be imported", name)
                continue
            main_app.add_typer(
                command_app,
                name=command_app.info.name or name.replace("_", "-"),
                help=command_app.info.help,
                short_help=command_app.info.short_help,
            )

    def search_commands(self, path: Path | None = None) -> list:
        """Check the command directory and return the command module names."""
        path = Path(path or Path(__file__).parent)
        files = sorted(p for p in path.glob("*.py") if p.is_file())
        return [f.stem for f in self._sortout(files) if self._check_command(f)]

    def _check_command(self, path: Path) -> bool:
        """A command module assigns every name of COMMAND_CONTRACT."""
        try:
            tree = ast.parse(path.read_text())
        except SyntaxError:
            logger.warning("skipping %s: not valid Python", path.name)
            return False
        assigned = {
            target.id
            for node in tree.body
            if isinstance(node, ast.Assign)
            for target in node.targets
            if isinstance(target, ast.Name)
        }
        missing = [n for n in COMMAND_CONTRACT if n not in assigned]
        if missing:
            logger.debug(
                "skipping %s: missing %s", path.name, ", ".join(missing)
            )
        return not missing

    def _sortout(self, files: list) -> list:
        """Sort out helpers and files which start with dot or underscores."""
        return [
            f
            for f in files
            if not f.name.startswith((".", "_")) and f.stem != "command_utils"
        ]

    def _import_command(self, modulename: str, name: str) -> Any:
        """Import a named object from a module in the context of this function."""
        try:
            module = __import__(modulename, globals(), locals(), [name])
        except ImportError:
            logger.exception("failed to import %s", modulename)
            return None
        return vars(module)[name]


def flow_options(cfg: ExperimentConfig) -> FlowOptions:
    solver = cfg.solver
    return FlowOptions(
        tau=solver.tau,
        tol=solver.tol,
        max_steps=solver.max_steps,
        seed=solver.seed,
    )


def minimization_context(
    cfg: ExperimentConfig,
    ground: GroundState,
    potential: RealizedPotential,
    weight: RealizedWeight,
    a: float,
) -> MinimizationContext:
    return MinimizationContext(
        V=potential.V,
        m=weight.m,
        a=a,
        s=cfg.problem.s,
        v_inf=potential.spec.v_inf,
        a_star=ground.a_star,
        x0=potential.x0,
    )
