import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, List, Optional

import typer
from commands.command_utils import ExperimentBase, load_config, printer_for
from config import ExperimentConfig, problem_hash_of
from constants import (
    GS_MAX_ITER,
    GS_TOL,
    IDENTITY_TOL,
    MAX_BOXES,
    ConfigOption,
    InitialGuess,
    OutOption,
    ReportOption,
    SeedOption,
)
from ground_state import (
    GroundState,
    box_grids,
    decay_fit,
    extrapolated_identities,
    gamma_moments,
    gn_quotient,
    solve_ground_state,
)
from print import Printer
from runner import Runner
from spectral_grid import Grid, encode_field
from utils import ConfigError, ResolutionError

logger = logging.getLogger(__name__)

name = "ground-state"
short_description = "Solve for the ground state U and the threshold a*"
description = """
Solve the ground-state equation (-Delta)^s U + U = U^{1+4s/d} by a
Petviashvili iteration.
\nReports the threshold a* = ||U||^{4s/d}, the Pohozaev and mass identity
residuals, the Gagliardo-Nirenberg quotient, the requested moments and a fit
of the algebraic tail."""

command_app = typer.Typer(
    name=name,
    context_settings={"help_option_names": ["-h", "--help"]},
    short_help=short_description,
    help=description,
    invoke_without_command=True,
)

# box defaults per dimension when no config is given: (n, L)
DEFAULT_BOX = {1: (1024, 40.0), 2: (256, 30.0)}


class GroundStateExperiment(ExperimentBase):
    """Solve for U on one grid and certify it.

    Args:
        grid --- box and resolution.
        s --- fractional order.
        tol --- residual target.
        max_iter --- iteration budget.
        seed --- seed of the initial perturbation.
        init --- initial guess kind.
        moments --- moment orders l to report.
        decay --- whether to fit the tail.
        out --- FLEP file for U, or None.
        cfg --- config the grid came from, if any.
        identity_tol --- certification bound on the identity residuals.
        boxes --- number of box doublings the identities are extrapolated
            over; 1 certifies on the given box alone.
    """

    name = "ground-state"

    def __init__(
        self,
        grid: Grid,
        s: float,
        tol: float = GS_TOL,
        max_iter: int = GS_MAX_ITER,
        seed: int = 0,
        init: InitialGuess = InitialGuess.gaussian,
        moments: list[float] | None = None,
        decay: bool = True,
        out: Path | None = None,
        cfg: ExperimentConfig | None = None,
        identity_tol: float = IDENTITY_TOL,
        boxes: int = 1,
    ) -> None:
        super().__init__(cfg)
        self.grid = grid
        self.s = s
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed
        self.init = init
        self.moments = moments or []
        self.decay = decay
        self.out = out
        self.identity_tol = identity_tol
        self.boxes = boxes
        self.hashes["problem_hash"] = problem_hash_of(
            grid.d, s, grid.n, grid.L, tol
        )

    def execute(self) -> dict[str, Any]:
        with self.phase("solve"):
            g = solve_ground_state(
                self.grid,
                self.s,
                tol=self.tol,
                max_iter=self.max_iter,
                seed=self.seed,
                init=self.init,
            )
        if self.out is not None:
            self.emit(
                self.out,
                encode_field(g.U, self.s, self.hashes["problem_hash"]),
            )
        grounds = [g]
        if self.boxes > 1:
            with self.phase("boxes"):
                grounds += [
                    solve_ground_state(
                        grid,
                        self.s,
                        tol=self.tol,
                        max_iter=self.max_iter,
                        seed=self.seed,
                        init=self.init,
                    )
                    for grid in box_grids(self.grid, self.boxes)[1:]
                ]
        with self.phase("diagnostics"):
            payload = self._certificate(g, grounds)
            payload["gamma"] = {
                f"{l:g}": _moments(g, l) for l in self.moments
            }
            if self.decay:
                payload["decay"] = self._decay(g)
        return payload

    def _certificate(
        self, g: GroundState, grounds: list[GroundState]
    ) -> dict[str, Any]:
        pohozaev, mass_identity = extrapolated_identities(grounds)
        certified = max(pohozaev, mass_identity) <= self.identity_tol
        if not certified:
            logger.warning(
                "identity residuals %.2e, %.2e exceed %.0e (box too small for"
                " the tail?)",
                pohozaev,
                mass_identity,
                self.identity_tol,
            )
        return {
            "d": g.d,
            "s": g.s,
            "n": self.grid.n,
            "L": self.grid.L,
            "a_star": g.a_star,
            "mass": g.mass,
            "pohozaev_residual": g.pohozaev_residual,
            "mass_identity_residual": g.mass_identity_residual,
            "boxes": [h.grid.L for h in grounds],
            "extrapolated_pohozaev_residual": pohozaev,
            "extrapolated_mass_identity_residual": mass_identity,
            "certified": certified,
            "gn_quotient": gn_quotient(g.U, g.s, g.a_star),
            "iterations": g.iterations,
            "final_residual": g.final_residual,
            "stabilizer": g.stabilizer,
        }

    def _decay(self, g: GroundState) -> dict[str, Any]:
        try:
            fit = decay_fit(g)
        except ResolutionError as exc:
            logger.warning("decay fit skipped: %s", exc)
            return {"skipped": str(exc)}
        out = asdict(fit)
        out["algebraic"] = fit.algebraic
        out["expected_exponent"] = -(g.d + 2 * g.s)
        return out

    def show(self, printer: Printer, payload: dict[str, Any]) -> None:
        printer.summary("Ground state", payload)
        for l, moments in payload.get("gamma", {}).items():
            printer.summary(f"Moments l={l}", moments)
        if "decay" in payload:
            printer.summary("Tail fit", payload["decay"])


@command_app.callback(rich_help_panel="Experiment-Commands")
def main(
    ctx: typer.Context,
    config: Optional[Path] = ConfigOption,
    dim: Optional[int] = typer.Option(
        default=None, help="Dimension d (1 or 2)."
    ),
    s: Optional[float] = typer.Option(
        default=None, help="Fractional order s in (0,1]."
    ),
    n: Optional[int] = typer.Option(
        default=None, help="Points per axis, a power of two."
    ),
    box: Optional[float] = typer.Option(
        default=None, help="Box length L (at least 20)."
    ),
    tol: Optional[float] = typer.Option(
        default=None, help="Residual tolerance."
    ),
    max_iter: Optional[int] = typer.Option(
        default=None, help="Iteration budget."
    ),
    seed: Optional[int] = SeedOption,
    init: Optional[InitialGuess] = typer.Option(
        default=None, help="Initial guess."
    ),
    l: Optional[List[float]] = typer.Option(
        default=None, help="Moment order l, may be repeated."
    ),
    decay: bool = typer.Option(
        default=True, help="Fit the algebraic tail of U."
    ),
    boxes: Optional[int] = typer.Option(
        default=None,
        help="Certify the identities over this many box doublings.",
    ),
    out: Optional[Path] = OutOption,
    report: Optional[Path] = ReportOption,
):
    printer = printer_for(ctx)
    try:
        experiment = build_experiment(
            config,
            dim,
            s,
            n,
            box,
            tol,
            max_iter,
            seed,
            init,
            l,
            decay,
            out,
            boxes,
        )
    except ConfigError as exc:
        printer.error(exc, 1)
        raise typer.Exit(1)
    raise typer.Exit(Runner(experiment, report, printer).run())


def build_experiment(
    config: Path | None,
    dim: int | None,
    s: float | None,
    n: int | None,
    box: float | None,
    tol: float | None,
    max_iter: int | None,
    seed: int | None,
    init: InitialGuess | None,
    moments: list[float] | None,
    decay: bool,
    out: Path | None,
    boxes: int | None = None,
) -> GroundStateExperiment:
    """Merge a config (if any) with the flags; flags take precedence."""
    cfg = None
    if config is not None:
        cfg = load_config(config)
        dim = dim or cfg.problem.d
        s = s if s is not None else cfg.problem.s
        n = n or cfg.grid.n
        box = box or cfg.grid.L
        tol = tol or cfg.solver.gs_tol
        max_iter = max_iter or cfg.solver.max_iter
        seed = seed if seed is not None else cfg.solver.seed
        init = init or cfg.solver.init
        boxes = boxes or cfg.solver.boxes
    if dim is None or s is None:
        raise ConfigError("give --config or both --dim and --s")
    if dim not in DEFAULT_BOX:
        raise ConfigError(f"--dim: d must be 1 or 2, got {dim}")
    if not 0 < s <= 1:
        raise ConfigError(f"--s: s must lie in (0,1], got {s}")
    if boxes is not None and not 1 <= boxes <= MAX_BOXES:
        raise ConfigError(f"--boxes: must lie in 1..{MAX_BOXES}, got {boxes}")
    default_n, default_box = DEFAULT_BOX[dim]
    try:
        grid = Grid(dim, n or default_n, box or default_box)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}")
    return GroundStateExperiment(
        grid,
        s,
        tol=tol or GS_TOL,
        max_iter=max_iter or GS_MAX_ITER,
        seed=seed or 0,
        init=init or InitialGuess.gaussian,
        moments=list(moments or []),
        decay=decay,
        out=out,
        cfg=cfg,
        identity_tol=cfg.solver.identity_tol if cfg else IDENTITY_TOL,
        boxes=boxes or 1,
    )


def _moments(g: GroundState, l: float) -> dict[str, Any]:
    moments = gamma_moments(g, l)
    return {**asdict(moments), "truncated": moments.truncated}
