"""Constrained minimization of the energy J_a on the mass sphere S_lambda.

J_a(u) = int |(-Delta)^{s/2} u|^2 + V u^2 - a d/(d+2s) int m |u|^{4s/d+2}

Minimizers are computed by a normalized gradient flow: a semi-implicit step
(fractional Laplacian implicit, potential and nonlinearity explicit), then
renormalization to the prescribed mass and |.|. The step size adapts: it grows
after accepted steps and halves whenever the energy would increase.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from constants import (
    MIN_MAX_STEPS,
    MIN_TOL,
    MULTIPLIER_MISMATCH,
    RESOLVED_POINTS,
    TAU_GROWTH,
    TAU_MAX_FACTOR,
)
from fractional_operator import (
    apply_symbol,
    check_order,
    dirichlet_energy,
    multiplier,
)
from ground_state import GroundState, critical_power, trial_function
from numpy.typing import NDArray
from scipy import fft
from spectral_grid import Field, Grid, dilate, integrate, interpolated_peak
from utils import (
    ConvergenceError,
    DomainError,
    EnergyUnboundedError,
    NotCriticalPointError,
)

logger = logging.getLogger(__name__)

ENERGY_SLACK = 1e-12
GN_BALANCE_SLACK = 1e-3


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    interaction: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "kinetic": self.kinetic,
            "potential": self.potential,
            "interaction": self.interaction,
            "total": self.total,
        }


def coupling_factor(s: float, d: int) -> float:
    """d/(d+2s), the factor in front of the interaction term."""
    return d / (d + 2 * s)


def energy(
    u: Field, V: Field, m: Field, a: float, s: float
) -> EnergyBreakdown:
    """Energy J_a(u) split into its terms."""
    u.same_grid(V)
    u.same_grid(m)
    u.check_finite()
    d = u.grid.d
    p = critical_power(s, d)
    kinetic = dirichlet_energy(u, s)
    potential = integrate(V * (u * u))
    interaction = integrate(
        m.with_values(m.values * np.abs(u.values) ** (p + 2))
    )
    total = kinetic + potential - a * coupling_factor(s, d) * interaction
    return EnergyBreakdown(kinetic, potential, interaction, total)


@dataclass(frozen=True, eq=False)
class MinimizationContext:
    """Everything J_a depends on, plus the mass of the constraint.

    Args:
        V --- potential field.
        m --- weight field, same grid as V.
        a --- coupling.
        s --- fractional order.
        mass --- prescribed L2 mass lambda.
        v_inf --- limit of V at infinity (divergence threshold).
        a_star --- sharp threshold, if known.
        x0 --- common extremum of V and m (default center of initial guesses).
    """

    V: Field
    m: Field
    a: float
    s: float
    mass: float = 1.0
    v_inf: float = 1.0
    a_star: float | None = None
    x0: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        check_order(self.s)
        self.V.same_grid(self.m)
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass}")

    @property
    def grid(self) -> Grid:
        return self.V.grid

    @property
    def d(self) -> int:
        return self.V.grid.d

    @property
    def center(self) -> NDArray[np.float64]:
        if self.x0 is None:
            return np.zeros(self.d)
        return np.asarray(self.x0, dtype=float)

    def with_coupling(self, a: float) -> "MinimizationContext":
        return MinimizationContext(
            self.V,
            self.m,
            a,
            self.s,
            self.mass,
            self.v_inf,
            self.a_star,
            self.x0,
        )

    def with_mass(self, mass: float) -> "MinimizationContext":
        return MinimizationContext(
            self.V,
            self.m,
            self.a,
            self.s,
            mass,
            self.v_inf,
            self.a_star,
            self.x0,
        )


@dataclass(frozen=True)
class FlowOptions:
    """Knobs of the gradient flow.

    tau None picks 0.1 mass/kinetic of the start, capped by the explicit terms.
    """

    tau: float | None = None
    tol: float = MIN_TOL
    max_steps: int = MIN_MAX_STEPS
    seed: int = 0
    log_every: int = 200


@dataclass(frozen=True, eq=False)
class MinimizerResult:
    u: Field
    a: float
    mass: float
    s: float
    energy: EnergyBreakdown
    lambda_a: float
    lambda_projected: float
    epsilon: float
    z_bar: tuple[float, ...]
    el_residual: float
    steps: int
    tau_final: float
    energy_history: list[float] = field(default_factory=list)

    @property
    def I(self) -> float:
        return self.energy.total

    @property
    def resolved(self) -> bool:
        return self.epsilon >= RESOLVED_POINTS * self.u.grid.h


class _Evaluator:
    """Array-level pieces of the flow for one context."""

    def __init__(self, ctx: MinimizationContext) -> None:
        self.ctx = ctx
        self.grid = ctx.grid
        self.p = critical_power(ctx.s, ctx.d)
        self.factor = coupling_factor(ctx.s, ctx.d)
        self.symbol = multiplier(self.grid, ctx.s).values
        self.V = ctx.V.values
        self.m = ctx.m.values
        self.dv = self.grid.cell_volume

    def renormalize(self, u: NDArray) -> NDArray:
        u = np.abs(u)
        norm = self.dv * np.sum(u * u)
        if not norm > 0 or not np.isfinite(norm):
            raise ConvergenceError("gradient flow lost its mass")
        return u * np.sqrt(self.ctx.mass / norm)

    def breakdown(self, u: NDArray) -> EnergyBreakdown:
        kinetic = dirichlet_energy(Field(self.grid, u), self.ctx.s)
        potential = float(self.dv * np.sum(self.V * u * u))
        interaction = float(
            self.dv * np.sum(self.m * np.abs(u) ** (self.p + 2))
        )
        total = kinetic + potential - self.ctx.a * self.factor * interaction
        return EnergyBreakdown(kinetic, potential, interaction, total)

    def el_operator(self, u: NDArray) -> tuple[NDArray, NDArray]:
        """(-Delta)^s u and (-Delta)^s u + V u - a m u^{1+p}."""
        frac = apply_symbol(u, self.symbol)
        nonlinear = self.ctx.a * self.m * np.abs(u) ** self.p * u
        return frac, frac + self.V * u - nonlinear

    def rayleigh(self, e: EnergyBreakdown) -> float:
        """Projected multiplier mu = lambda_a / 2 from energy terms."""
        return (
            e.kinetic + e.potential - self.ctx.a * e.interaction
        ) / self.ctx.mass

    def residual(self, u: NDArray, mu: float) -> float:
        frac, lhs = self.el_operator(u)
        res = np.sqrt(self.dv * np.sum((lhs - mu * u) ** 2))
        scale = np.sqrt(self.dv * np.sum(frac**2)) + np.sqrt(
            self.dv * np.sum(u**2)
        )
        return float(res / scale)

    def gn_balance(self, e: EnergyBreakdown, u: NDArray) -> float:
        plain = float(self.dv * np.sum(np.abs(u) ** (self.p + 2)))
        return e.kinetic - self.ctx.a * self.factor * plain

    def step(self, u: NDArray, mu: float, tau: float) -> NDArray:
        explicit = -self.V * u + self.ctx.a * self.m * np.abs(u) ** self.p * u
        rhs = u + tau * (explicit + mu * u)
        out = fft.irfftn(
            fft.rfftn(rhs) / (1.0 + tau * self.symbol), s=self.grid.shape
        )
        return self.renormalize(out)


def default_tau(
    ctx: MinimizationContext, e: EnergyBreakdown, u: NDArray, p: float
) -> float:
    explicit = float(np.max(ctx.V.values)) + ctx.a * float(
        np.max(ctx.m.values * np.abs(u) ** p)
    )
    return min(
        0.1 * ctx.mass / max(e.kinetic, 1e-300),
        0.5 / max(explicit, 1e-300),
    )


def _check_bounded(
    ev: _Evaluator, e: EnergyBreakdown, u: NDArray, step: int
) -> None:
    ctx = ev.ctx
    threshold = -10.0 * ctx.v_inf * ctx.mass - 10.0
    if e.total < threshold:
        raise EnergyUnboundedError(
            f"energy unbounded: J={e.total:.6g} below {threshold:.6g}"
            f" after {step} steps"
        )
    balance = ev.gn_balance(e, u)
    if balance < -GN_BALANCE_SLACK * e.kinetic:
        raise EnergyUnboundedError(
            f"energy unbounded: kinetic term is dominated by the interaction"
            f" (balance {balance:.6g}) after {step} steps"
        )


def gradient_flow_minimize(
    u0: Field, ctx: MinimizationContext, options: FlowOptions | None = None
) -> MinimizerResult:
    """Run the normalized gradient flow from u0 to a critical point of J_a.

    Args:
        u0 --- starting field on the context's grid.
        ctx --- coefficients, coupling and mass.
        options --- step size, tolerance and budget.

    Returns:
        The converged MinimizerResult.
    """
    options = options or FlowOptions()
    u0.same_grid(ctx.V)
    ev = _Evaluator(ctx)
    u = ev.renormalize(u0.check_finite().values)
    e = ev.breakdown(u)
    tau0 = options.tau or default_tau(ctx, e, u, ev.p)
    tau = tau0
    history = [e.total]
    _check_bounded(ev, e, u, 0)

    residual = float("inf")
    for step in range(1, options.max_steps + 1):
        mu = ev.rayleigh(e)
        trial = ev.step(u, mu, tau)
        e_trial = ev.breakdown(trial)
        if e_trial.total > e.total + ENERGY_SLACK * abs(e.total):
            tau *= 0.5
            if tau < 1e-10 * tau0:
                raise ConvergenceError(
                    "gradient flow step size underflow", history
                )
            continue
        u, e = trial, e_trial
        tau = min(tau * TAU_GROWTH, TAU_MAX_FACTOR * tau0)
        history.append(e.total)
        _check_bounded(ev, e, u, step)

        residual = ev.residual(u, ev.rayleigh(e))
        if step % options.log_every == 0:
            logger.debug(
                "flow a=%.8g step=%d J=%.12g residual=%.3e tau=%.3e",
                ctx.a,
                step,
                e.total,
                residual,
                tau,
            )
        if residual <= options.tol:
            break
    else:
        raise ConvergenceError(
            f"gradient flow did not converge in {options.max_steps} steps"
            f" (residual {residual:.3e})",
            history,
        )

    minimizer = Field(ctx.grid, u, ctx.mass)
    epsilon = e.kinetic ** (-1.0 / (2 * ctx.s))
    lambda_a = multiplier_formula(e, ctx)
    lambda_proj = 2.0 * ev.rayleigh(e)
    result = MinimizerResult(
        u=minimizer,
        a=ctx.a,
        mass=ctx.mass,
        s=ctx.s,
        energy=e,
        lambda_a=lambda_a,
        lambda_projected=lambda_proj,
        epsilon=epsilon,
        z_bar=tuple(float(v) for v in interpolated_peak(minimizer)),
        el_residual=residual,
        steps=step,
        tau_final=tau,
        energy_history=history,
    )
    logger.info(
        "minimizer a=%.10g: I=%.10g eps=%.6g steps=%d",
        ctx.a,
        e.total,
        epsilon,
        step,
    )
    if not result.resolved:
        logger.warning(
            "minimizer at a=%.10g is not resolved: eps=%.3e < %d h",
            ctx.a,
            epsilon,
            RESOLVED_POINTS,
        )
    return result


def multiplier_formula(e: EnergyBreakdown, ctx: MinimizationContext) -> float:
    """lambda_a = (2 I - a 4s/(d+2s) W) / mass."""
    d, s = ctx.d, ctx.s
    return (
        2.0 * e.total - ctx.a * 4 * s / (d + 2 * s) * e.interaction
    ) / ctx.mass


def lagrange_multiplier(
    r: MinimizerResult, ctx: MinimizationContext
) -> float:
    """Closed-form multiplier, cross-checked against the EL equation.

    The projection uses |u|^p u as test function, so it differs from the
    closed form unless u is a critical point.
    """
    ev = _Evaluator(ctx)
    u = r.u.values
    _, lhs = ev.el_operator(u)
    test = np.abs(u) ** ev.p * u
    projected = 2.0 * float(np.sum(lhs * test) / np.sum(u * test))
    closed = multiplier_formula(r.energy, ctx)
    scale = max(abs(closed), 2.0 * r.energy.kinetic / ctx.mass)
    mismatch = abs(closed - projected) / scale
    if mismatch > MULTIPLIER_MISMATCH:
        raise NotCriticalPointError(
            f"not a critical point: multiplier {closed:.10g} vs projection"
            f" {projected:.10g}"
        )
    return closed


def concentration_point(u: Field) -> tuple[float, ...]:
    return tuple(float(v) for v in interpolated_peak(u))


def default_start(
    ctx: MinimizationContext,
    ground: GroundState | None = None,
    t: float = 1.0,
    seed: int = 0,
) -> Field:
    """Starting field centred on x0: the trial profile u_t, or a Gaussian."""
    grid = ctx.grid
    if ground is not None:
        u = trial_function(ground, grid, ctx.center, t)
    else:
        r = grid.radius(ctx.center)
        u = Field(grid, np.exp(-((t * r) ** 2)))
    rng = np.random.default_rng(seed)
    noise = 1e-6 * rng.standard_normal(grid.shape) * np.abs(u.values)
    return (u + u.with_values(noise)).normalized(ctx.mass)


def minimize_with_mass(
    mass: float,
    ctx: MinimizationContext,
    options: FlowOptions | None = None,
    u0: Field | None = None,
    ground: GroundState | None = None,
) -> MinimizerResult:
    """Minimize J_a on the sphere of the given mass.

    Requires 0 < mass < (a*/a)^{d/(2s)} when a* is known.
    """
    options = options or FlowOptions()
    if not mass > 0:
        raise DomainError(f"mass must be positive, got {mass}")
    if ctx.a_star is not None and ctx.a > 0:
        bound = (ctx.a_star / ctx.a) ** (ctx.d / (2 * ctx.s))
        if not mass < bound:
            raise DomainError(
                f"mass {mass} must lie below (a*/a)^(d/2s) = {bound:.6g}"
            )
    ctx = ctx.with_mass(mass)
    if u0 is None:
        u0 = default_start(ctx, ground, seed=options.seed)
    return gradient_flow_minimize(u0, ctx, options)


def rescaled_profile(r: MinimizerResult) -> tuple[Field, float]:
    """w(x) = eps^{d/2} u(eps x + z_bar) on the same grid and its kinetic energy."""
    d = r.u.grid.d
    w = dilate(
        r.u,
        scale=r.epsilon,
        center=np.zeros(d),
        source_center=r.z_bar,
        fill=None,
    )
    w = w * r.epsilon ** (d / 2)
    return w, dirichlet_energy(w, r.s)


def gn_balance(r: MinimizerResult, a_star: float) -> float:
    """a* d/(d+2s) int m(eps x + z_bar) |w|^{p+2}, which tends to 1 near a*.

    Evaluated in the original variables, where it equals
    a* d/(d+2s) eps^{2s} int m |u|^{p+2}.
    """
    d = r.u.grid.d
    return (
        a_star
        * coupling_factor(r.s, d)
        * r.epsilon ** (2 * r.s)
        * r.energy.interaction
    )


def warm_start(
    r: MinimizerResult, ratio: float, grid: Grid | None = None
) -> Field:
    """Dilate a converged minimizer about z_bar so its scale shrinks by ratio."""
    if not ratio > 0:
        raise DomainError(f"ratio must be positive, got {ratio}")
    grid = grid or r.u.grid
    z = np.asarray(r.z_bar)
    u = dilate(
        r.u,
        scale=1.0 / ratio,
        center=z,
        source_center=z,
        target=grid,
        fill=0.0,
    )
    return Field(grid, np.abs(u.values)).normalized(r.mass)
