"""Ground state U of (-Delta)^s U + U = U^{1+4s/d}, its identities, moments and tail.

The ground state is computed by spectral renormalization (Petviashvili iteration)
on the periodic box, recentred on the origin and kept even in every axis.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Sequence

import numpy as np
from constants import (
    COLLAPSE_THRESHOLD,
    DECAY_WINDOW,
    GS_MAX_ITER,
    GS_TOL,
    TRUNCATION_RADIUS,
    InitialGuess,
)
from fractional_operator import (
    apply_symbol,
    check_order,
    dirichlet_energy,
    multiplier,
    parseval_weights,
)
from numpy.typing import NDArray
from scipy import fft
from scipy.optimize import curve_fit
from spectral_grid import (
    Field,
    Grid,
    dilate,
    fourier_shift,
    interpolated_peak,
    lp_norm_p,
    moment,
    symmetrize,
)
from utils import (
    ConvergenceError,
    DomainError,
    ResolutionError,
    TrivialFixedPointError,
)

logger = logging.getLogger(__name__)

MIN_SHELLS = 8
ALGEBRAIC_SPREAD = 0.2


def critical_power(s: float, d: int) -> float:
    """Mass-critical exponent p = 4s/d."""
    return 4 * s / d


@dataclass(frozen=True, eq=False)
class GroundState:
    """Converged ground state and its certificates.

    Args:
        U --- nonnegative field with its peak at the origin.
        s --- fractional order.
        a_star --- sharp threshold, the L2 norm of U to the power 4s/d.
        pohozaev_residual --- relative mismatch of the kinetic/interaction ratio.
        mass_identity_residual --- relative mismatch of the mass/interaction ratio.
        iterations --- iterations used.
        final_residual --- sup-norm equation residual relative to sup U.
        stabilizer --- Petviashvili factor M at the last iteration.
        history --- residual per iteration.
    """

    U: Field
    s: float
    a_star: float
    pohozaev_residual: float
    mass_identity_residual: float
    iterations: int
    final_residual: float
    stabilizer: float = 1.0
    history: list[float] = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.U.grid

    @property
    def d(self) -> int:
        return self.U.grid.d

    @property
    def p(self) -> float:
        return critical_power(self.s, self.d)

    @cached_property
    def mass(self) -> float:
        return lp_norm_p(self.U, 2.0)

    @cached_property
    def kinetic(self) -> float:
        return dirichlet_energy(self.U, self.s)

    @cached_property
    def interaction(self) -> float:
        return lp_norm_p(self.U, 2.0 + self.p)


@dataclass(frozen=True)
class GammaMoments:
    """Moments of the ground state entering the blow-up constants.

    gamma1 is the integral of |x|^{l+2s} U^{p+2}, gamma2 that of |x|^l U^2.
    The tail fractions are the shares contributed from r > 0.4 L.
    """

    l: float
    gamma1: float
    gamma2: float
    tail1: float
    tail2: float

    @property
    def truncated(self) -> bool:
        return self.tail1 >= 0.01 or self.tail2 >= 0.01


@dataclass(frozen=True)
class DecayFit:
    """Tail fit of the ground state on a radial window.

    fitted_exponent comes from the periodic-image model and is negative
    (about -(d+2s) for s < 1). plain_exponent is the bare log-log slope.
    """

    fitted_exponent: float
    plain_exponent: float
    window: tuple[float, float]
    c_lower: float
    c_upper: float
    residual: float
    inner_exponent: float
    outer_exponent: float
    shells: int

    @property
    def algebraic(self) -> bool:
        spread = abs(self.inner_exponent - self.outer_exponent)
        return spread <= ALGEBRAIC_SPREAD * abs(self.fitted_exponent)


def initial_guess(
    grid: Grid, kind: InitialGuess | str = InitialGuess.gaussian, seed: int = 0
) -> Field:
    """Radial starting profile with a small seeded perturbation."""
    r = grid.radius()
    kind = InitialGuess(kind)
    if kind == InitialGuess.gaussian:
        envelope = 1.5 * np.exp(-(r**2))
    else:
        envelope = 1.2 * np.exp(-((r / 2.0) ** 4))
    rng = np.random.default_rng(seed)
    noise = 1e-3 * rng.standard_normal(grid.shape) * envelope
    return Field(grid, np.abs(envelope + noise))


def _weighted_inner(
    grid: Grid, a_hat: NDArray, b_hat: NDArray, symbol: NDArray | float = 1.0
) -> float:
    w = parseval_weights(grid)
    return float(np.sum(w * symbol * np.real(np.conj(a_hat) * b_hat)))


def equation_residual(u: Field, s: float) -> float:
    """sup |(-Delta)^s u + u - u^{1+p}| / sup |u|."""
    grid = u.grid
    p = critical_power(s, grid.d)
    table = multiplier(grid, s)
    lhs = apply_symbol(u.values, 1.0 + table.values)
    res = lhs - np.abs(u.values) ** p * u.values
    return float(np.max(np.abs(res)) / np.max(np.abs(u.values)))


def recenter(u: Field) -> Field:
    """Move the interpolated peak of u onto the origin and symmetrize."""
    peak = interpolated_peak(u)
    if np.any(np.abs(peak) > 0):
        u = fourier_shift(u, -peak)
    return symmetrize(u)


def solve_ground_state(
    grid: Grid,
    s: float,
    tol: float = GS_TOL,
    max_iter: int = GS_MAX_ITER,
    seed: int = 0,
    init: InitialGuess | str = InitialGuess.gaussian,
    log_every: int = 50,
) -> GroundState:
    """Petviashvili iteration for the ground state on a grid.

    Args:
        grid --- box with L >= 20.
        s --- fractional order in (0, 1].
        tol --- target of the sup-norm relative equation residual.
        max_iter --- iteration budget.
        seed --- seed of the initial perturbation.
        init --- "gaussian" or "plateau" starting profile.
        log_every --- DEBUG log cadence.

    Returns:
        The certified GroundState.
    """
    s = check_order(s)
    if grid.L < 20:
        raise DomainError(f"box length must be at least 20, got {grid.L}")
    if tol < 1e-12:
        raise DomainError(f"tolerance must be >= 1e-12, got {tol}")

    p = critical_power(s, grid.d)
    sigma = 1.0 + p
    gamma = sigma / (sigma - 1.0)
    symbol = 1.0 + multiplier(grid, s).values

    # the subgrid shift leaves small negative samples in the tails
    u = np.abs(recenter(initial_guess(grid, init, seed)).values)
    history: list[float] = []
    stabilizer = float("nan")
    for it in range(1, max_iter + 1):
        u_hat = fft.rfftn(u)
        n_hat = fft.rfftn(np.abs(u) ** sigma)
        stabilizer = _weighted_inner(grid, u_hat, u_hat, symbol) / (
            _weighted_inner(grid, u_hat, n_hat)
        )
        u = fft.irfftn(stabilizer**gamma * n_hat / symbol, s=grid.shape)
        u = symmetrize(Field(grid, np.abs(u))).values
        top = float(np.max(u))
        if not np.isfinite(top) or top < COLLAPSE_THRESHOLD:
            raise TrivialFixedPointError()

        residual = equation_residual(Field(grid, u), s)
        if residual <= tol:
            # the recentred profile is what gets returned, so it must pass
            u = np.abs(recenter(Field(grid, u)).values)
            residual = equation_residual(Field(grid, u), s)
        history.append(residual)
        if it % log_every == 0:
            logger.debug(
                "ground state it=%d residual=%.3e M=%.12f",
                it,
                residual,
                stabilizer,
            )
        if residual <= tol:
            break
    else:
        raise ConvergenceError(
            f"ground state did not converge in {max_iter} iterations"
            f" (residual {history[-1]:.3e})",
            history,
        )

    U = Field(grid, u)
    final_residual = history[-1]
    pohozaev, mass_identity = identity_residuals(U, s)
    a_star = lp_norm_p(U, 2.0) ** (2 * s / grid.d)
    logger.info(
        "ground state converged: it=%d residual=%.3e a*=%.10f",
        it,
        final_residual,
        a_star,
    )
    return GroundState(
        U=U,
        s=s,
        a_star=a_star,
        pohozaev_residual=pohozaev,
        mass_identity_residual=mass_identity,
        iterations=it,
        final_residual=final_residual,
        stabilizer=stabilizer,
        history=history,
    )


def certify_ground_state(U: Field, s: float) -> GroundState:
    """Rebuild a GroundState around a stored profile (no iterations)."""
    s = check_order(s)
    U = Field(U.grid, np.abs(U.values))
    pohozaev, mass_identity = identity_residuals(U, s)
    return GroundState(
        U=U,
        s=s,
        a_star=lp_norm_p(U, 2.0) ** (2 * s / U.grid.d),
        pohozaev_residual=pohozaev,
        mass_identity_residual=mass_identity,
        iterations=0,
        final_residual=equation_residual(U, s),
    )


def identity_residuals(u: Field, s: float) -> tuple[float, float]:
    """Relative Pohozaev and mass-identity residuals of a candidate u."""
    d = u.grid.d
    p = critical_power(s, d)
    interaction = lp_norm_p(u, 2.0 + p)
    if interaction <= 0:
        raise DomainError("identities are undefined for the zero field")
    kinetic = dirichlet_energy(u, s)
    mass = lp_norm_p(u, 2.0)
    pohozaev = abs(kinetic / interaction - d / (d + 2 * s)) * (d + 2 * s) / d
    mass_identity = (
        abs(mass / interaction - 2 * s / (d + 2 * s)) * (d + 2 * s) / (2 * s)
    )
    return pohozaev, mass_identity


def image_exponents(s: float, d: int, count: int) -> list[float]:
    """Leading powers of 1/L in the periodic-image error of the identities."""
    base = d + 2 * s
    powers = {round(base + 2 * s * j, 12) for j in range(count)}
    powers.add(round(base + 2.0, 12))
    return sorted(powers)[:count]


def box_grids(grid: Grid, count: int) -> list[Grid]:
    """grid and its doublings L 2^j at the same spacing, j < count."""
    return [Grid(grid.d, grid.n * 2**j, grid.L * 2**j) for j in range(count)]


def extrapolated_identities(
    grounds: Sequence[GroundState],
) -> tuple[float, float]:
    """Pohozaev and mass-identity residuals extrapolated to an infinite box.

    The ground states share s, d and the grid spacing and differ in L. For
    s < 1 the ratios kinetic/interaction and mass/interaction carry
    periodic-image errors in powers of 1/L, and every box beyond the first
    eliminates one of them. For s = 1 the errors are exponentially small
    and the largest box is taken as it is.
    """
    if not grounds:
        raise DomainError("need at least one ground state")
    first = grounds[0]
    s, d = first.s, first.d
    for g in grounds[1:]:
        if g.s != s or g.d != d:
            raise DomainError("ground states differ in s or d")
        if not np.isclose(g.grid.h, first.grid.h, rtol=1e-12):
            raise DomainError("ground states differ in the grid spacing")
    boxes = np.array([g.grid.L for g in grounds], dtype=float)
    if np.unique(boxes).size != boxes.size:
        raise DomainError("box lengths must be distinct")
    if s == 1.0 or len(grounds) == 1:
        g = grounds[int(np.argmax(boxes))]
        return g.pohozaev_residual, g.mass_identity_residual

    scaled = boxes / boxes.min()
    columns = [np.ones_like(scaled)] + [
        scaled ** (-e) for e in image_exponents(s, d, len(grounds) - 1)
    ]
    ratios = np.array(
        [[g.kinetic / g.interaction, g.mass / g.interaction] for g in grounds]
    )
    kinetic, mass = np.linalg.solve(np.column_stack(columns), ratios)[0]
    pohozaev = abs(kinetic - d / (d + 2 * s)) * (d + 2 * s) / d
    mass_identity = abs(mass - 2 * s / (d + 2 * s)) * (d + 2 * s) / (2 * s)
    logger.debug(
        "identities over boxes %s: pohozaev=%.3e mass=%.3e",
        boxes.tolist(),
        pohozaev,
        mass_identity,
    )
    return float(pohozaev), float(mass_identity)


def check_identities(g: GroundState) -> dict[str, float]:
    pohozaev, mass_identity = identity_residuals(g.U, g.s)
    return {
        "pohozaev_residual": pohozaev,
        "mass_identity_residual": mass_identity,
    }


def gn_quotient(u: Field, s: float, a_star: float | GroundState) -> float:
    """Gagliardo-Nirenberg quotient, >= 1 with equality at the ground state.

    Args:
        u --- nonzero field.
        s --- fractional order.
        a_star --- the sharp threshold, or a GroundState carrying it.
    """
    if isinstance(a_star, GroundState):
        a_star = a_star.a_star
    d = u.grid.d
    p = critical_power(s, d)
    interaction = lp_norm_p(u, 2.0 + p)
    if interaction <= 0:
        raise DomainError("quotient is undefined for the zero field")
    kinetic = dirichlet_energy(u, s)
    mass = lp_norm_p(u, 2.0)
    return (
        (d + 2 * s)
        / (d * a_star)
        * kinetic
        * mass ** (2 * s / d)
        / interaction
    )


def trial_function(
    g: GroundState, grid: Grid, center: Sequence[float], t: float
) -> Field:
    """u_t(x) = t^{d/2} U(t (x - center)) / ||U||_2, sampled on grid."""
    if not t > 0:
        raise DomainError(f"trial scale must be positive, got {t}")
    center = np.asarray(center, dtype=float)
    u = dilate(
        g.U,
        scale=t,
        center=center,
        source_center=np.zeros(g.d),
        target=grid,
        fill=0.0,
    )
    return u * (t ** (g.d / 2) / np.sqrt(g.mass))


def check_moment_order(l: float, s: float, d: int) -> None:
    """Raise unless both moments with exponent l are finite for U."""
    if not l > 0:
        raise DomainError(f"moment exponent l must be positive, got {l}")
    if not l + 2 * s < d + 8 * s + 8 * s**2 / d:
        raise DomainError(
            f"moment diverges: l+2s={l + 2 * s} must be below"
            f" d+8s+8s^2/d={d + 8 * s + 8 * s**2 / d}"
        )
    if not l < d + 4 * s:
        raise DomainError(
            f"moment diverges: l={l} must be below d+4s={d + 4 * s}"
        )


def _tail_share(
    u: Field, r: NDArray, weight_power: float, pow: float
) -> float:
    integrand = r**weight_power * np.abs(u.values) ** pow
    total = np.sum(integrand)
    if total <= 0:
        return 0.0
    return float(np.sum(integrand[r > TRUNCATION_RADIUS * u.grid.L]) / total)


def gamma_moments(g: GroundState, l: float) -> GammaMoments:
    check_moment_order(l, g.s, g.d)
    origin = np.zeros(g.d)
    gamma1 = moment(g.U, origin, l + 2 * g.s, 2.0 + g.p)
    gamma2 = moment(g.U, origin, l, 2.0)
    r = g.grid.radius()
    result = GammaMoments(
        l=l,
        gamma1=gamma1,
        gamma2=gamma2,
        tail1=_tail_share(g.U, r, l + 2 * g.s, 2.0 + g.p),
        tail2=_tail_share(g.U, r, l, 2.0),
    )
    if result.truncated:
        logger.warning(
            "moment l=%g is truncated by the box: tail shares %.2e, %.2e",
            l,
            result.tail1,
            result.tail2,
        )
    return result


def inverse_moment(g: GroundState, beta: float) -> float:
    """Integral of |x|^{-beta} U^2 with the origin cell integrated exactly."""
    if not 0 <= beta < g.d:
        raise DomainError(f"beta must lie in [0, d), got {beta}")
    grid = g.grid
    r = grid.radius()
    u2 = g.U.values**2
    weights = np.zeros_like(r)
    inside = r > 0
    weights[inside] = r[inside] ** (-beta) * grid.cell_volume
    # origin cell, as a segment (d=1) or a disc of equal area (d=2)
    if grid.d == 1:
        rho = grid.h / 2
        cell = 2 * rho ** (1 - beta) / (1 - beta)
    else:
        rho = grid.h / np.sqrt(np.pi)
        cell = 2 * np.pi * rho ** (2 - beta) / (2 - beta)
    weights[~inside] = cell
    return float(np.sum(weights * u2))


def _image_offsets(grid: Grid, images: int) -> NDArray[np.float64]:
    rng = range(-images, images + 1)
    return np.array(list(product(rng, repeat=grid.d)), dtype=float) * grid.L


def _image_model(offsets: NDArray[np.float64]):
    def model(points: NDArray, log_c: float, alpha: float) -> NDArray:
        # points has shape (d, npts)
        total = np.zeros(points.shape[1])
        for shift in offsets:
            dist = np.sqrt(np.sum((points + shift[:, None]) ** 2, axis=0))
            total += dist ** (-alpha)
        return log_c + np.log(total)

    return model


def _fit_window(
    points: NDArray, log_u: NDArray, offsets: NDArray, alpha0: float
) -> tuple[float, float, float]:
    model = _image_model(offsets)
    log_r = np.log(np.sqrt(np.sum(points**2, axis=0)))
    log_c0 = float(np.mean(log_u + alpha0 * log_r))
    popt, _ = curve_fit(
        model, points, log_u, p0=(log_c0, alpha0), maxfev=20000
    )
    residual = float(np.sqrt(np.mean((model(points, *popt) - log_u) ** 2)))
    return float(popt[0]), float(popt[1]), residual


def decay_fit(
    g: GroundState,
    window: tuple[float, float] = DECAY_WINDOW,
    images: int | None = None,
) -> DecayFit:
    """Fit U ~ C * sum over periodic images of |x + nL|^{-alpha} on a shell.

    Args:
        g --- converged ground state.
        window --- radial window as fractions of L, at most 0.45.
        images --- image count per axis, defaults to 10 (d=1) or 3 (d=2).
    """
    grid = g.grid
    lo, hi = window[0] * grid.L, window[1] * grid.L
    if window[1] > 0.45:
        raise DomainError("decay window must end inside 0.45 L")
    r = grid.radius()
    u = g.U.values
    mask = (r >= lo) & (r <= hi) & (u > 0)
    shells = len(np.unique(np.round(r[mask] / grid.h)))
    if shells < MIN_SHELLS:
        raise ResolutionError(
            f"decay window resolves only {shells} shells (need {MIN_SHELLS})"
        )
    if images is None:
        images = 10 if grid.d == 1 else 3
    offsets = _image_offsets(grid, images)

    points = np.stack([x[mask] for x in grid.coordinates])
    radii = r[mask]
    log_u = np.log(u[mask])
    plain_slope = float(np.polyfit(np.log(radii), log_u, 1)[0])
    alpha0 = max(-plain_slope, 0.5)

    _, alpha, residual = _fit_window(points, log_u, offsets, alpha0)
    mid = 0.5 * (lo + hi)
    inner = radii <= mid
    _, alpha_in, _ = _fit_window(
        points[:, inner], log_u[inner], offsets, alpha
    )
    _, alpha_out, _ = _fit_window(
        points[:, ~inner], log_u[~inner], offsets, alpha
    )

    ratio = u[mask] * (1.0 + radii**alpha)
    fit = DecayFit(
        fitted_exponent=-alpha,
        plain_exponent=plain_slope,
        window=(lo, hi),
        c_lower=float(np.min(ratio)),
        c_upper=float(np.max(ratio)),
        residual=residual,
        inner_exponent=-alpha_in,
        outer_exponent=-alpha_out,
        shells=shells,
    )
    if not fit.algebraic:
        logger.warning(
            "tail is not algebraic: exponent %.3f on the inner half vs %.3f"
            " on the outer half",
            fit.inner_exponent,
            fit.outer_exponent,
        )
    return fit
