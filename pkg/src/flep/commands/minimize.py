import logging
from pathlib import Path
from typing import Any, Optional

import typer
from asymptotics import (
    optimal_trial_scale,
    predicted_energy,
    predicted_epsilon,
    theory_constants,
    trial_energy_bound,
)
from coefficients import coefficients_from_config
from commands.command_utils import (
    ExperimentBase,
    flow_options,
    load_config,
    minimization_context,
    obtain_ground_state,
    printer_for,
)
from config import ExperimentConfig, problem_hash
from constants import (
    RESOLVED_POINTS,
    ConfigOption,
    GroundStateOption,
    OutOption,
    ReportOption,
    SeedOption,
)
from minimizer import (
    default_start,
    gn_balance,
    gradient_flow_minimize,
    lagrange_multiplier,
    minimize_with_mass,
    rescaled_profile,
)
from print import Printer
from runner import Runner
from spectral_grid import encode_field
from utils import ConfigError, ResolutionError

logger = logging.getLogger(__name__)

name = "minimize"
short_description = "Minimize the constrained energy at one coupling a"
description = """
Minimize J_a(u) over fields of prescribed L2 mass by a normalized gradient
flow.
\nThe coupling is given directly (--a) or as a fraction of the threshold
(--a-ratio). Reports the energy breakdown, the Lagrange multiplier, the
concentration scale epsilon and point z_bar, and the predicted blow-up
values below a*."""

command_app = typer.Typer(
    name=name,
    context_settings={"help_option_names": ["-h", "--help"]},
    short_help=short_description,
    help=description,
    invoke_without_command=True,
)


class MinimizeExperiment(ExperimentBase):
    """One constrained minimization.

    Args:
        cfg --- experiment config.
        a --- coupling, or None to use a_ratio.
        a_ratio --- coupling as a fraction of a*.
        mass --- prescribed mass.
        ground_state --- stored ground state to reuse.
        out --- FLEP file for the minimizer, or None.
    """

    name = "minimize"

    def __init__(
        self,
        cfg: ExperimentConfig,
        a: float | None = None,
        a_ratio: float | None = None,
        mass: float = 1.0,
        ground_state: Path | None = None,
        out: Path | None = None,
    ) -> None:
        super().__init__(cfg)
        if (a is None) == (a_ratio is None):
            raise ConfigError("give exactly one of --a and --a-ratio")
        if a is not None and not a > 0:
            raise ConfigError(f"--a: coupling must be positive, got {a}")
        if a_ratio is not None and not a_ratio > 0:
            raise ConfigError(f"--a-ratio: must be positive, got {a_ratio}")
        if not mass > 0:
            raise ConfigError(f"--mass: must be positive, got {mass}")
        self.a = a
        self.a_ratio = a_ratio
        self.mass = mass
        self.ground_state = ground_state
        self.out = out

    def execute(self) -> dict[str, Any]:
        cfg = self.cfg
        grid = cfg.make_grid()
        with self.phase("ground_state"):
            ground = obtain_ground_state(cfg, self.ground_state)
        potential, weight = coefficients_from_config(cfg, grid)
        a = self.a if self.a is not None else self.a_ratio * ground.a_star
        ctx = minimization_context(cfg, ground, potential, weight, a)
        theory = theory_constants(ground, potential.spec, weight.spec)
        subcritical = a < ground.a_star

        # start from the trial profile at its optimal scale, kept resolved
        t = 1.0
        if subcritical:
            t = min(
                optimal_trial_scale(a, theory),
                1.0 / (RESOLVED_POINTS * grid.h),
            )
        options = flow_options(cfg)
        with self.phase("minimize"):
            if self.mass == 1.0:
                u0 = default_start(ctx, ground, t, options.seed)
                result = gradient_flow_minimize(u0, ctx, options)
            else:
                result = minimize_with_mass(
                    self.mass, ctx, options, ground=ground
                )
        ctx = ctx.with_mass(self.mass)
        if self.out is not None:
            self.emit(
                self.out,
                encode_field(result.u, cfg.problem.s, problem_hash(cfg)),
            )

        with self.phase("diagnostics"):
            lambda_a = lagrange_multiplier(result, ctx)
            _, rescaled_kinetic = rescaled_profile(result)
            payload: dict[str, Any] = {
                "a": a,
                "a_star": ground.a_star,
                "a_ratio": a / ground.a_star,
                "mass": self.mass,
                "case": theory.case.value,
                "l": theory.l,
                "energy": result.energy.as_dict(),
                "I": result.I,
                "lambda_a": lambda_a,
                "lambda_projected": result.lambda_projected,
                "epsilon": result.epsilon,
                "z_bar": list(result.z_bar),
                "el_residual": result.el_residual,
                "steps": result.steps,
                "tau_final": result.tau_final,
                "resolved": result.resolved,
                "rescaled_kinetic": rescaled_kinetic,
                "gn_balance": gn_balance(result, ground.a_star),
            }
            if subcritical and self.mass == 1.0:
                payload["I_pred"] = predicted_energy(a, theory)
                payload["eps_pred"] = predicted_epsilon(a, theory)
                payload["eps2s_lambda"] = (
                    result.epsilon ** (2 * result.s) * lambda_a
                )
                try:
                    payload["trial_bound"] = trial_energy_bound(
                        a, t, ground, ctx
                    )
                except ResolutionError as exc:
                    logger.warning("trial bound skipped: %s", exc)
        return payload

    def show(self, printer: Printer, payload: dict[str, Any]) -> None:
        printer.summary("Minimizer", payload)
        printer.summary("Energy", payload["energy"])


@command_app.callback(rich_help_panel="Experiment-Commands")
def main(
    ctx: typer.Context,
    config: Optional[Path] = ConfigOption,
    a: Optional[float] = typer.Option(default=None, help="Coupling a."),
    a_ratio: Optional[float] = typer.Option(
        default=None, help="Coupling as a fraction of a*."
    ),
    mass: float = typer.Option(default=1.0, help="Prescribed L2 mass."),
    ground_state: Optional[Path] = GroundStateOption,
    tau: Optional[float] = typer.Option(
        default=None, help="Initial gradient flow step."
    ),
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    report: Optional[Path] = ReportOption,
):
    printer = printer_for(ctx)
    try:
        cfg = load_config(config).updated(solver={"seed": seed, "tau": tau})
        experiment = MinimizeExperiment(
            cfg, a, a_ratio, mass, ground_state, out
        )
    except ConfigError as exc:
        printer.error(exc, 1)
        raise typer.Exit(1)
    raise typer.Exit(Runner(experiment, report, printer).run())
