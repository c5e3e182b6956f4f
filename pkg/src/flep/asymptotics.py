"""Blow-up asymptotics as a -> a*: trial bounds, predicted laws, sweeps and fits."""

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from coefficients import (
    PotentialSpec,
    RealizedPotential,
    RealizedWeight,
    WeightSpec,
    moment_order,
)
from constants import (
    MIN_FIT_POINTS,
    RESOLVED_POINTS,
    SUBADDITIVITY_MARGIN,
    Case,
)
from ground_state import GroundState, gamma_moments, trial_function
from minimizer import (
    FlowOptions,
    MinimizationContext,
    MinimizerResult,
    coupling_factor,
    default_start,
    energy,
    gradient_flow_minimize,
    lagrange_multiplier,
    minimize_with_mass,
    rescaled_profile,
    warm_start,
)
from numpy.typing import NDArray
from scipy import fft
from scipy.optimize import minimize, minimize_scalar
from spectral_grid import Field, Grid, dilate, fourier_shift, l2_norm
from tqdm import tqdm
from utils import DomainError, ResolutionError, write_text_atomic

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "k",
    "a_k",
    "a_star_minus_a",
    "I1",
    "I1_pred",
    "epsilon",
    "eps_pred",
    "lambda_a",
    "eps2s_lambda",
    "zbar_x",
    "zbar_y",
    "profile_err",
    "resolved",
)


@dataclass(frozen=True)
class TheoryConstants:
    """Constants that fix the predicted blow-up laws."""

    d: int
    s: float
    a_star: float
    l: float
    case: Case
    gamma: float
    gamma1: float
    gamma2: float
    C0: float
    C_bar: float
    truncated: bool = False

    @property
    def energy_slope(self) -> float:
        return self.l / (self.l + 2 * self.s)

    @property
    def eps_slope(self) -> float:
        return 1.0 / (self.l + 2 * self.s)

    @property
    def scale_coefficient(self) -> float:
        """c in t_opt = (c / ((a*-a) a*^{(d-2s)/2s}))^{1/(l+2s)}."""
        d, s, l = self.d, self.s, self.l
        weight = l * self.C_bar * self.gamma1 / (d + 2 * s)
        potential = l * self.C0 * self.gamma2 / d
        if self.case == Case.Q_DOMINANT:
            return weight
        if self.case == Case.P_DOMINANT:
            return potential
        return weight + potential

    @property
    def energy_prefactor(self) -> float:
        d, s, l, g = self.d, self.s, self.l, self.gamma
        return (
            (l + 2 * s)
            / l
            * (l * g / (2 * s)) ** (2 * s / (l + 2 * s))
            * self.a_star ** (-(d + l) / (l + 2 * s))
            * ((d + 2 * s) / (2 * s)) ** (l / (l + 2 * s))
        )

    @property
    def eps_prefactor(self) -> float:
        d, s, l = self.d, self.s, self.l
        return (2 * s / d) ** (1 / (2 * s)) * (
            self.a_star ** ((d - 2 * s) / (2 * s)) / self.scale_coefficient
        ) ** (1 / (l + 2 * s))

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["case"] = self.case.value
        out["energy_slope"] = self.energy_slope
        out["eps_slope"] = self.eps_slope
        out["energy_prefactor"] = self.energy_prefactor
        out["eps_prefactor"] = self.eps_prefactor
        return out


def gamma_constant(
    case: Case,
    s: float,
    d: int,
    gamma1: float,
    gamma2: float,
    C0: float,
    C_bar: float,
    l: float,
) -> float:
    """Three-branch constant of the blow-up laws."""
    ratio = d / (d + 2 * s)
    weight = ratio ** ((l + 2 * s) / (2 * s)) * C_bar * gamma1
    potential = ratio ** (l / (2 * s)) * C0 * gamma2
    if case == Case.Q_DOMINANT:
        return weight
    if case == Case.P_DOMINANT:
        return potential
    return weight + potential


def theory_constants(
    ground: GroundState,
    potential: PotentialSpec,
    weight: WeightSpec,
) -> TheoryConstants:
    s, d = ground.s, ground.d
    l, case = moment_order(potential.p, weight.q, s)
    moments = gamma_moments(ground, l)
    gamma = gamma_constant(
        case,
        s,
        d,
        moments.gamma1,
        moments.gamma2,
        potential.C0,
        weight.C_bar,
        l,
    )
    return TheoryConstants(
        d=d,
        s=s,
        a_star=ground.a_star,
        l=l,
        case=case,
        gamma=gamma,
        gamma1=moments.gamma1,
        gamma2=moments.gamma2,
        C0=potential.C0,
        C_bar=weight.C_bar,
        truncated=moments.truncated,
    )


def _check_subcritical(a: float, a_star: float) -> float:
    gap = a_star - a
    if not gap > 0:
        raise DomainError(f"coupling a={a} must lie below a*={a_star}")
    return gap


def optimal_trial_scale(a: float, tc: TheoryConstants) -> float:
    gap = _check_subcritical(a, tc.a_star)
    denominator = gap * tc.a_star ** ((tc.d - 2 * tc.s) / (2 * tc.s))
    return (tc.scale_coefficient / denominator) ** (1 / (tc.l + 2 * tc.s))


def predicted_energy(a: float, tc: TheoryConstants) -> float:
    gap = _check_subcritical(a, tc.a_star)
    return tc.energy_prefactor * gap**tc.energy_slope


def predicted_epsilon(a: float, tc: TheoryConstants) -> float:
    t = optimal_trial_scale(a, tc)
    return (2 * tc.s / tc.d) ** (1 / (2 * tc.s)) / t


def model_trial_energy(a: float, t: float, tc: TheoryConstants) -> float:
    """A t^{2s} + B t^{-l}: the leading terms of the trial energy."""
    d, s, l = tc.d, tc.s, tc.l
    A = d / (2 * s) * (tc.a_star - a) / tc.a_star
    B = 0.0
    if tc.case in (Case.Q_DOMINANT, Case.BALANCED):
        B += coupling_factor(s, d) * tc.C_bar * tc.gamma1
    if tc.case in (Case.P_DOMINANT, Case.BALANCED):
        B += tc.C0 * tc.gamma2
    B *= tc.a_star ** (-d / (2 * s))
    return A * t ** (2 * s) + B * t ** (-l)


def _trial(
    t: float, ground: GroundState, ctx: MinimizationContext
) -> Field:
    grid = ctx.grid
    if 1.0 / t < RESOLVED_POINTS * grid.h:
        raise ResolutionError(
            f"trial scale t={t:.4g} is not resolved by h={grid.h:.4g}"
        )
    return trial_function(ground, grid, ctx.center, t)


def trial_breakdown(
    a: float, t: float, ground: GroundState, ctx: MinimizationContext
) -> dict[str, float]:
    """Split J_a(u_t) into the model, weight-deficit and potential terms."""
    u = _trial(t, ground, ctx)
    e = energy(u, ctx.V, ctx.m, a, ctx.s)
    p2 = 2 + 4 * ctx.s / ctx.d
    factor = coupling_factor(ctx.s, ctx.d)
    plain = float(np.sum(np.abs(u.values) ** p2) * ctx.grid.cell_volume)
    return {
        "model": ground.d / (2 * ground.s)
        * (ground.a_star - a)
        / ground.a_star
        * t ** (2 * ground.s),
        "balance": e.kinetic - a * factor * plain,
        "weight_deficit": a * factor * (plain - e.interaction),
        "potential": e.potential,
        "total": e.total,
    }


def trial_energy_bound(
    a: float, t: float, ground: GroundState, ctx: MinimizationContext
) -> float:
    """J_a(u_t) on the grid, an upper bound for the minimal energy."""
    u = _trial(t, ground, ctx)
    return energy(u, ctx.V, ctx.m, a, ctx.s).total


def argmin_trial_scale(
    a: float,
    ground: GroundState,
    ctx: MinimizationContext,
    t_lo: float,
    t_hi: float,
) -> tuple[float, float]:
    """Minimize the trial bound over log t in [t_lo, t_hi]; return (t, bound)."""
    result = minimize_scalar(
        lambda x: trial_energy_bound(a, math.exp(x), ground, ctx),
        bounds=(math.log(t_lo), math.log(t_hi)),
        method="bounded",
        options={"xatol": 1e-4},
    )
    return math.exp(result.x), float(result.fun)


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    prefactor: float
    r_squared: float


def fit_powerlaw(xs: Sequence[float], ys: Sequence[float]) -> PowerLawFit:
    """Least squares of log y against log x."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < MIN_FIT_POINTS or xs.size != ys.size:
        raise DomainError(
            f"need at least {MIN_FIT_POINTS} paired points, got {xs.size}"
        )
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DomainError("power-law fit needs strictly positive data")
    log_x, log_y = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(log_x, log_y, 1)
    predicted = intercept + slope * log_x
    ss_res = float(np.sum((log_y - predicted) ** 2))
    ss_tot = float(np.sum((log_y - np.mean(log_y)) ** 2))
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return PowerLawFit(float(slope), float(math.exp(intercept)), r_squared)


def limit_profile(
    ground: GroundState, grid: Grid, z0: Sequence[float] | None = None
) -> Field:
    """(2s/d)^{d/4s} U((2s/d)^{1/2s} (x + z0)) / ||U||_2 on grid."""
    d, s = ground.d, ground.s
    kappa = (2 * s / d) ** (1 / (2 * s))
    z0 = np.zeros(d) if z0 is None else np.asarray(z0, dtype=float)
    W = dilate(
        ground.U,
        scale=kappa,
        center=-z0,
        source_center=np.zeros(d),
        target=grid,
        fill=0.0,
    )
    return W * ((2 * s / d) ** (d / (4 * s)) / math.sqrt(ground.mass))


def profile_error(
    w: Field, ground: GroundState
) -> tuple[float, tuple[float, ...]]:
    """min over z0 of ||w - W_{z0}|| / ||W||; returns the error and z0.

    The translation is first located by FFT cross-correlation, then refined
    below the grid spacing by Nelder-Mead over Fourier shifts.
    """
    grid = w.grid
    W = limit_profile(ground, grid)
    norm = l2_norm(W)
    corr = fft.irfftn(
        fft.rfftn(w.values) * np.conj(fft.rfftn(W.values)), s=grid.shape
    )
    index = np.unravel_index(int(np.argmax(corr)), grid.shape)
    coarse = np.array(index, dtype=float) * grid.h
    coarse = (coarse + grid.L / 2) % grid.L - grid.L / 2

    def distance(shift: NDArray) -> float:
        return l2_norm(w - fourier_shift(W, shift)) / norm

    result = minimize(
        distance,
        coarse,
        method="Nelder-Mead",
        options={"xatol": 1e-6, "fatol": 1e-12},
    )
    z0 = tuple(float(-v) for v in result.x)
    return float(result.fun), z0


@dataclass(frozen=True)
class SubadditivityCheck:
    mass: float
    part: float
    I_whole: float
    I_parts: float

    @property
    def margin(self) -> float:
        return self.I_parts - self.I_whole

    @property
    def holds(self) -> bool:
        return self.margin > SUBADDITIVITY_MARGIN


def check_strict_subadditivity(
    ctx: MinimizationContext,
    a: float,
    splits: Sequence[tuple[float, float]] = ((1.0, 0.5), (0.8, 0.4)),
    options: FlowOptions | None = None,
    ground: GroundState | None = None,
) -> list[SubadditivityCheck]:
    """Compare I_mass(a) with I_part(a) + I_{mass-part}(a) for each split."""
    ctx = ctx.with_coupling(a)
    cache: dict[float, float] = {}

    def level(mass: float) -> float:
        if mass not in cache:
            cache[mass] = minimize_with_mass(
                mass, ctx, options, ground=ground
            ).I
        return cache[mass]

    checks = []
    for mass, part in splits:
        whole = level(mass)
        parts = level(part) + level(mass - part)
        checks.append(SubadditivityCheck(mass, part, whole, parts))
        logger.info(
            "subadditivity: I_%g=%.10g, I_%g+I_%g=%.10g",
            mass,
            whole,
            part,
            mass - part,
            parts,
        )
    return checks


@dataclass(frozen=True)
class SweepRow:
    k: int
    a_k: float
    a_star_minus_a: float
    I1: float
    I1_pred: float
    epsilon: float
    eps_pred: float
    lambda_a: float
    eps2s_lambda: float
    zbar_x: float
    zbar_y: float
    profile_err: float
    resolved: bool
    trial_bound: float = float("nan")

    def csv_values(self) -> list[str]:
        values = []
        for name in CSV_COLUMNS:
            value = getattr(self, name)
            if isinstance(value, bool):
                values.append("true" if value else "false")
            elif isinstance(value, int):
                values.append(str(value))
            else:
                values.append(repr(float(value)))
        return values


@dataclass(frozen=True)
class SweepReport:
    rows: list[SweepRow]
    theory: TheoryConstants
    fits: dict[str, PowerLawFit] = field(default_factory=dict)

    def csv_text(self) -> str:
        buffer = io.StringIO()
        table = csv.writer(buffer, lineterminator="\n")
        table.writerow(CSV_COLUMNS)
        for row in self.rows:
            table.writerow(row.csv_values())
        return buffer.getvalue()

    def to_csv(self, path: str | Path) -> None:
        write_text_atomic(path, self.csv_text())

    def summary(self) -> dict[str, Any]:
        resolved = [r for r in self.rows if r.resolved]
        last = resolved[-1] if resolved else None
        out: dict[str, Any] = {
            "theory": self.theory.to_dict(),
            "fits": {k: asdict(v) for k, v in self.fits.items()},
            "rows": len(self.rows),
            "resolved_rows": len(resolved),
        }
        if last is not None:
            out["last_resolved"] = {
                "k": last.k,
                "energy_ratio": last.I1 / last.I1_pred,
                "eps_ratio": last.epsilon / last.eps_pred,
                "eps2s_lambda": last.eps2s_lambda,
                "eps2s_lambda_limit": -4 * self.theory.s / self.theory.d,
                "profile_err": last.profile_err,
            }
        return out


def sweep_couplings(a_star: float, k_values: Sequence[int]) -> list[float]:
    """a_k = a* (1 - 2^{-k})."""
    return [a_star * (1.0 - 2.0 ** (-k)) for k in k_values]


def partition_chains(k_values: Sequence[int], chains: int) -> list[list[int]]:
    """Split the k range into contiguous warm-start chains."""
    chains = max(1, min(chains, len(k_values)))
    return [
        [int(k) for k in block]
        for block in np.array_split(np.asarray(k_values), chains)
        if len(block)
    ]


@dataclass(frozen=True, eq=False)
class ChainTask:
    ground: GroundState
    ctx: MinimizationContext
    theory: TheoryConstants
    points: list[tuple[int, float]]  # (k, a)
    options: FlowOptions


def _predicted(a: float, tc: TheoryConstants, fn) -> float:
    return fn(a, tc) if a < tc.a_star else float("nan")


def _evaluate_row(
    k: int,
    result: MinimizerResult,
    task: ChainTask,
    trial_bound: float,
) -> SweepRow:
    ctx = task.ctx.with_coupling(result.a)
    tc = task.theory
    lambda_a = lagrange_multiplier(result, ctx)
    w, _ = rescaled_profile(result)
    err, _ = profile_error(w, task.ground)
    z = list(result.z_bar) + [0.0]
    return SweepRow(
        k=k,
        a_k=result.a,
        a_star_minus_a=tc.a_star - result.a,
        I1=result.I,
        I1_pred=_predicted(result.a, tc, predicted_energy),
        epsilon=result.epsilon,
        eps_pred=_predicted(result.a, tc, predicted_epsilon),
        lambda_a=lambda_a,
        eps2s_lambda=result.epsilon ** (2 * result.s) * lambda_a,
        zbar_x=z[0],
        zbar_y=z[1],
        profile_err=err,
        resolved=result.resolved and not tc.truncated,
        trial_bound=trial_bound,
    )


def run_chain(task: ChainTask) -> list[tuple[SweepRow, Field]]:
    """Minimize along one chain, each point warm-started from the previous."""
    out = []
    previous: MinimizerResult | None = None
    tc = task.theory
    for k, a in task.points:
        ctx = task.ctx.with_coupling(a)
        t_opt = (
            optimal_trial_scale(a, tc) if a < tc.a_star else 1.0
        )
        if previous is None:
            u0 = default_start(ctx, task.ground, t_opt, task.options.seed)
        else:
            ratio = 1.0
            if a < tc.a_star and previous.a < tc.a_star:
                ratio = predicted_epsilon(a, tc) / predicted_epsilon(
                    previous.a, tc
                )
            u0 = warm_start(previous, ratio)
        result = gradient_flow_minimize(u0, ctx, task.options)
        try:
            bound = trial_energy_bound(a, t_opt, task.ground, ctx)
        except ResolutionError:
            bound = float("nan")
        out.append((_evaluate_row(k, result, task, bound), result.u))
        previous = result
    return out


def fit_sweep(rows: Sequence[SweepRow]) -> dict[str, PowerLawFit]:
    resolved = [r for r in rows if r.resolved]
    if len(resolved) < MIN_FIT_POINTS:
        raise ResolutionError(
            f"insufficient resolution for fit: {len(resolved)} resolved rows,"
            f" need {MIN_FIT_POINTS}"
        )
    gaps = [r.a_star_minus_a for r in resolved]
    return {
        "energy": fit_powerlaw(gaps, [r.I1 for r in resolved]),
        "epsilon": fit_powerlaw(gaps, [r.epsilon for r in resolved]),
    }


def run_sweep(
    ground: GroundState,
    potential: RealizedPotential,
    weight: RealizedWeight,
    k_values: Sequence[int],
    options: FlowOptions | None = None,
    chains: int = 1,
    workers: int = 1,
    couplings: Sequence[float] | None = None,
    progress: bool = True,
) -> tuple[SweepReport, list[Field]]:
    """Minimize at a_k = a*(1 - 2^{-k}) and fit the blow-up laws.

    Args:
        ground --- ground state fixing a* and the moments.
        potential --- realized potential.
        weight --- realized weight.
        k_values --- sweep indices.
        options --- gradient flow options.
        chains --- number of warm-start chains the k range is split into.
        workers --- process pool size, chains run in parallel.
        couplings --- explicit couplings replacing a_k (k is then the index).
        progress --- show a progress bar.

    Returns:
        The report with fits, and the minimizer field of every row.
    """
    options = options or FlowOptions()
    s = ground.s
    theory = theory_constants(ground, potential.spec, weight.spec)
    ctx = MinimizationContext(
        V=potential.V,
        m=weight.m,
        a=0.0,
        s=s,
        v_inf=potential.spec.v_inf,
        a_star=ground.a_star,
        x0=potential.x0,
    )
    if couplings is None:
        k_values = [int(k) for k in k_values]
        couplings = sweep_couplings(ground.a_star, k_values)
    else:
        k_values = list(range(len(couplings)))
    a_of = dict(zip(k_values, couplings))
    tasks = [
        ChainTask(ground, ctx, theory, [(k, a_of[k]) for k in block], options)
        for block in partition_chains(k_values, chains)
    ]
    logger.info(
        "sweep over k=%s in %d chains on %d workers (case %s, l=%g)",
        k_values,
        len(tasks),
        workers,
        theory.case.value,
        theory.l,
    )

    results: list[tuple[SweepRow, Field]] = []
    if workers <= 1 or len(tasks) == 1:
        for task in tqdm(tasks, desc="chains", disable=not progress):
            results.extend(run_chain(task))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_chain, task) for task in tasks]
            for future in tqdm(
                as_completed(futures),
                total=len(futures),
                desc="chains",
                disable=not progress,
            ):
                results.extend(future.result())

    results.sort(key=lambda item: item[0].k)
    rows = [row for row, _ in results]
    fields = [u for _, u in results]
    for row in rows:
        if not row.resolved:
            logger.warning(
                "row k=%d is not resolved and left out of fits", row.k
            )
    try:
        fits = fit_sweep(rows)
    except ResolutionError as exc:
        # rows are still worth writing out
        exc.partial = (SweepReport(rows, theory), fields)
        raise
    return SweepReport(rows, theory, fits), fields
