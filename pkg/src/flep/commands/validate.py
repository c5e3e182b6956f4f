import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

import typer
from asymptotics import check_strict_subadditivity, theory_constants
from coefficients import (
    RealizedPotential,
    RealizedWeight,
    coefficients_from_config,
    validate_assumptions,
)
from commands.command_utils import (
    ExperimentBase,
    flow_options,
    load_config,
    minimization_context,
    obtain_ground_state,
    printer_for,
)
from config import ExperimentConfig
from constants import ConfigOption, GroundStateOption, ReportOption
from minimizer import default_start, gradient_flow_minimize
from print import Printer
from runner import Runner
from utils import AssumptionError, ConfigError, NumericalError

logger = logging.getLogger(__name__)

name = "validate"
short_description = "Check the coefficient assumptions of a config"
description = """
Realize V and m on the grid of a config and check the assumptions on them
numerically: minimum and maximum at x0, tail and local exponents, and the
constants C0 and C_bar.
\nWith --energy-checks, also solve for the ground state and check
0 < I(a) < V_inf and strict subadditivity of the energy in the mass at a = a*/2."""

command_app = typer.Typer(
    name=name,
    context_settings={"help_option_names": ["-h", "--help"]},
    short_help=short_description,
    help=description,
    invoke_without_command=True,
)

CHECK_RATIO = 0.5


class ValidateExperiment(ExperimentBase):
    """Assumption report, optionally with the energy checks.

    Args:
        cfg --- experiment config.
        energy_checks --- also minimize at a*/2 and check the energy bounds.
        ground_state --- stored ground state to reuse for --energy-checks.
    """

    name = "validate"

    def __init__(
        self,
        cfg: ExperimentConfig,
        energy_checks: bool = False,
        ground_state: Path | None = None,
    ) -> None:
        super().__init__(cfg)
        self.energy_checks = energy_checks
        self.ground_state = ground_state
        self.rows: list[tuple[str, str, str, str]] = []

    def execute(self) -> dict[str, Any]:
        cfg = self.cfg
        s = cfg.problem.s
        potential, weight = coefficients_from_config(cfg, cfg.make_grid())
        with self.phase("assumptions"):
            report = validate_assumptions(potential, weight, s)
        self.rows = report.rows()
        payload = report.to_dict()
        payload["tail_margin"] = potential.spec.tail_margin
        payload["C0"] = potential.C0
        payload["C_bar"] = weight.C_bar
        if not report.passed:
            self.partial = payload
            raise AssumptionError(
                [
                    f"{c.tag}: {c.description} ({c.detail})"
                    for c in report.failures()
                ]
            )
        if self.energy_checks:
            self.partial = payload
            with self.phase("energy_checks"):
                payload["energy_checks"] = self._energy_checks(
                    potential, weight
                )
        return payload

    def _energy_checks(
        self, potential: RealizedPotential, weight: RealizedWeight
    ) -> dict[str, Any]:
        cfg = self.cfg
        ground = obtain_ground_state(cfg, self.ground_state)
        theory = theory_constants(ground, potential.spec, weight.spec)
        a = CHECK_RATIO * ground.a_star
        ctx = minimization_context(cfg, ground, potential, weight, a)
        options = flow_options(cfg)
        u0 = default_start(ctx, ground, seed=options.seed)
        result = gradient_flow_minimize(u0, ctx, options)
        v_inf = potential.spec.v_inf
        splits = check_strict_subadditivity(
            ctx, a, options=options, ground=ground
        )
        checks = {
            "a": a,
            "case": theory.case.value,
            "I1": result.I,
            "v_inf": v_inf,
            "bounds_hold": 0 < result.I < v_inf,
            "subadditivity": [
                {**asdict(c), "margin": c.margin, "holds": c.holds}
                for c in splits
            ],
        }
        failures = []
        if not checks["bounds_hold"]:
            failures.append(
                f"I1({a:.6g}) = {result.I:.6g} not in (0, {v_inf})"
            )
        failures += [
            f"I_{c.mass:g} = {c.I_whole:.10g} is not below"
            f" I_{c.part:g} + I_{c.mass - c.part:g} = {c.I_parts:.10g}"
            for c in splits
            if not c.holds
        ]
        if failures:
            self.partial["energy_checks"] = checks
            raise NumericalError(
                "energy check failed: " + "; ".join(failures)
            )
        return checks

    def show(self, printer: Printer, payload: dict[str, Any]) -> None:
        if self.rows:
            printer.assumptions(self.rows)
        if "energy_checks" in payload:
            printer.summary("Energy checks", payload["energy_checks"])


@command_app.callback(rich_help_panel="Experiment-Commands")
def main(
    ctx: typer.Context,
    config: Optional[Path] = ConfigOption,
    energy_checks: bool = typer.Option(
        default=False, help="Also check the energy bounds and subadditivity."
    ),
    ground_state: Optional[Path] = GroundStateOption,
    report: Optional[Path] = ReportOption,
):
    printer = printer_for(ctx)
    try:
        experiment = ValidateExperiment(
            load_config(config), energy_checks, ground_state
        )
    except ConfigError as exc:
        printer.error(exc, 1)
        raise typer.Exit(1)
    raise typer.Exit(Runner(experiment, report, printer).run())
