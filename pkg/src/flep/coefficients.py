"""Potential V and weight m families with closed-form assumption constants.

V(x) = v_inf * [1 - (1 + c |x-x0|^p)^{-beta/p}]
m(x) = m_inf + (1 - m_inf) / (1 + c2 |x-x0|^q)

Both are radial about x0 (minimal-image distance), so V has its unique zero and
m its unique maximum 1 at x0. Validators measure the local exponents and
constants numerically and check the tail, ring and uniqueness conditions.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from constants import BALANCED_TOL, TAIL_RING, Case
from numpy.typing import NDArray
from scipy.optimize import curve_fit
from spectral_grid import Field, Grid
from utils import AssumptionError

logger = logging.getLogger(__name__)

EXPONENT_TOL = 0.02
CONSTANT_TOL = 0.01


def weight_exponent_bound(s: float, d: int) -> float:
    """Upper end of the admissible weight exponent, d + 8s + 8s^2/d."""
    return d + 8 * s + 8 * s**2 / d


@dataclass(frozen=True)
class PotentialSpec:
    v_inf: float
    x0: tuple[float, ...]
    p: float
    beta: float
    c: float

    def violations(self, s: float, d: int) -> list[str]:
        """All violated assumptions, empty if the family is admissible."""
        out = []
        if len(self.x0) != d:
            out.append(f"(V3): x0 must have {d} coordinates")
        if not self.v_inf > 0:
            out.append("(V1): v_inf must be positive")
        if not 0 < self.beta < 2 * s:
            out.append("(V2): beta must lie in (0,2s)")
        if not 0 < self.p < d + 4 * s:
            out.append("(V4): p must lie in (0,d+4s)")
        if not self.c > 0:
            out.append("(V4): c must be positive")
        if not out and not self.tail_margin > 1:
            out.append(
                "(V2): tail margin v_inf*c^(-beta/p) must exceed 1,"
                f" got {self.tail_margin:.6g}"
            )
        return out

    @property
    def tail_margin(self) -> float:
        return self.v_inf * self.c ** (-self.beta / self.p)

    @property
    def C0(self) -> float:
        """Limit of V / |x-x0|^p at x0."""
        return self.v_inf * self.beta * self.c / self.p

    def evaluate(self, r: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.v_inf * (
            1.0 - (1.0 + self.c * r**self.p) ** (-self.beta / self.p)
        )


@dataclass(frozen=True)
class WeightSpec:
    m_inf: float
    x0: tuple[float, ...]
    q: float
    c2: float

    def violations(self, s: float, d: int) -> list[str]:
        out = []
        if len(self.x0) != d:
            out.append(f"(M1): x0 must have {d} coordinates")
        if not 0 < self.m_inf < 1:
            out.append("(M1): m_inf must lie in (0,1)")
        upper = weight_exponent_bound(s, d)
        if not 2 * s < self.q < upper:
            out.append(
                "(M2): q must lie in (2s,d+8s+8s^2/d) = "
                f"(2s,{upper:.6g})"
            )
        if not self.c2 > 0:
            out.append("(M2): c2 must be positive")
        return out

    @property
    def C_bar(self) -> float:
        """Limit of (1 - m) / |x-x0|^q at x0."""
        return (1.0 - self.m_inf) * self.c2

    def evaluate(self, r: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.m_inf + (1.0 - self.m_inf) / (1.0 + self.c2 * r**self.q)


@dataclass(frozen=True, eq=False)
class RealizedPotential:
    spec: PotentialSpec
    V: Field
    x0: tuple[float, ...]
    index: tuple[int, ...]

    @property
    def C0(self) -> float:
        return self.spec.C0


@dataclass(frozen=True, eq=False)
class RealizedWeight:
    spec: WeightSpec
    m: Field
    x0: tuple[float, ...]
    index: tuple[int, ...]

    @property
    def C_bar(self) -> float:
        return self.spec.C_bar


def _snap(
    grid: Grid, x0: Sequence[float], what: str
) -> tuple[tuple[float, ...], tuple[int, ...]]:
    """Check x0 lies in the central half of the box and move it onto a node."""
    x0 = np.asarray(x0, dtype=float)
    if np.any(np.abs(x0) > grid.L / 4):
        raise AssumptionError(
            f"(V3): {what} center {tuple(x0)} must lie in the central half of"
            " the box"
        )
    index = grid.nearest_node(x0)
    snapped = grid.node(index)
    if not np.allclose(snapped, x0, rtol=0, atol=1e-12):
        logger.warning(
            "%s center %s snapped to grid node %s",
            what,
            tuple(x0),
            tuple(snapped),
        )
    return tuple(float(v) for v in snapped), index


def realize_potential(
    spec: PotentialSpec, grid: Grid, s: float
) -> RealizedPotential:
    violations = spec.violations(s, grid.d)
    if violations:
        raise AssumptionError(violations)
    x0, index = _snap(grid, spec.x0, "potential")
    values = spec.evaluate(grid.radius(x0))
    return RealizedPotential(spec, Field(grid, values), x0, index)


def realize_weight(spec: WeightSpec, grid: Grid, s: float) -> RealizedWeight:
    violations = spec.violations(s, grid.d)
    if violations:
        raise AssumptionError(violations)
    x0, index = _snap(grid, spec.x0, "weight")
    values = spec.evaluate(grid.radius(x0))
    return RealizedWeight(spec, Field(grid, values), x0, index)


def moment_order(p: float, q: float, s: float) -> tuple[float, Case]:
    """l = min(q - 2s, p) and which coefficient attains it."""
    weight_order = q - 2 * s
    if abs(p - weight_order) <= BALANCED_TOL:
        return min(p, weight_order), Case.BALANCED
    if weight_order < p:
        return weight_order, Case.Q_DOMINANT
    return p, Case.P_DOMINANT


def coefficients_from_config(
    cfg: Any, grid: Grid
) -> tuple[RealizedPotential, RealizedWeight]:
    """Realize the coefficient pair described by an ExperimentConfig."""
    s = cfg.problem.s
    potential = realize_potential(cfg.potential_spec(), grid, s)
    weight = realize_weight(cfg.weight_spec(), grid, s)
    return potential, weight


def radial_samples(
    f: Field, index: tuple[int, ...], first: int = 2, last: int = 16
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Samples of f along the first axis at j*h from a node, j = first..last."""
    grid = f.grid
    j = np.arange(first, last + 1)
    idx = [np.full(j.size, i) for i in index]
    idx[0] = (index[0] + j) % grid.n
    return j * grid.h, f.values[tuple(idx)]


def local_exponent(
    r: NDArray[np.float64], g: NDArray[np.float64]
) -> tuple[float, float]:
    """Exponent of g ~ C r^e near 0, with a first-order correction.

    Returns the corrected and the plain log-log exponent.
    """
    log_r = np.log(r)
    log_g = np.log(g)
    plain, intercept = np.polyfit(log_r, log_g, 1)

    def model(x: NDArray, log_c: float, e: float, kappa: float) -> NDArray:
        return log_c + e * x + kappa * np.exp(plain * x)

    popt, _ = curve_fit(model, log_r, log_g, p0=(intercept, plain, 0.0))
    return float(popt[1]), float(plain)


def richardson_constant(
    f: Field, index: tuple[int, ...], exponent: float
) -> float:
    """Extrapolate g(r)/r^e to r = 0 from r = 4h and r = 8h."""
    r, g = radial_samples(f, index, first=4, last=8)
    r1, r2 = r[0], r[-1]
    R1, R2 = g[0] / r1**exponent, g[-1] / r2**exponent
    return float(
        (R1 * r2**exponent - R2 * r1**exponent)
        / (r2**exponent - r1**exponent)
    )


@dataclass(frozen=True)
class AssumptionCheck:
    tag: str
    description: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    """Pass/fail per assumption plus the measured constants."""

    checks: list[AssumptionCheck]
    measured: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]

    def check(self, tag: str) -> bool:
        """True if every check carrying the tag passed."""
        return all(c.passed for c in self.checks if c.tag == tag)

    def rows(self) -> list[tuple[str, str, str, str]]:
        return [
            (c.tag, c.description, "pass" if c.passed else "FAIL", c.detail)
            for c in self.checks
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [
                {
                    "tag": c.tag,
                    "description": c.description,
                    "passed": c.passed,
                    "detail": c.detail,
                }
                for c in self.checks
            ],
            "measured": self.measured,
        }


def _relative(measured: float, expected: float) -> float:
    return abs(measured - expected) / abs(expected)


def validate_assumptions(
    potential: RealizedPotential, weight: RealizedWeight, s: float
) -> ValidationReport:
    """Numerically confirm the assumptions on a realized coefficient pair."""
    V, m = potential.V, weight.m
    V.same_grid(m)
    grid = V.grid
    pspec, wspec = potential.spec, weight.spec
    checks = []
    measured = {}

    # (V1) zero minimum at x0
    v_at_x0 = float(V.values[potential.index])
    checks.append(
        AssumptionCheck(
            "(V1)",
            "V(x0) = 0 = min V",
            v_at_x0 <= 1e-12 * pspec.v_inf
            and float(np.min(V.values)) >= v_at_x0,
            f"V(x0)={v_at_x0:.3e}",
        )
    )

    # (V2) tail below v_inf - |x|^-beta on the far ring, sup V < v_inf
    r = grid.radius(potential.x0)
    ring = (r >= TAIL_RING[0] * grid.L) & (r <= TAIL_RING[1] * grid.L)
    gap = V.values[ring] - pspec.v_inf + r[ring] ** (-pspec.beta)
    sup_v = float(np.max(V.values))
    checks.append(
        AssumptionCheck(
            "(V2)",
            "V - v_inf < -|x|^-beta on the far ring",
            bool(np.all(gap < 0)),
            f"max gap={float(np.max(gap)):.3e}",
        )
    )
    checks.append(
        AssumptionCheck(
            "(V2)",
            "sup V < v_inf",
            sup_v < pspec.v_inf,
            f"sup V={sup_v:.6g}",
        )
    )

    # (V3) common extremum
    argmin_v = np.unravel_index(int(np.argmin(V.values)), grid.shape)
    argmax_m = np.unravel_index(int(np.argmax(m.values)), grid.shape)
    same = tuple(argmin_v) == tuple(argmax_m) == tuple(potential.index)
    checks.append(
        AssumptionCheck(
            "(V3)",
            "argmin V = argmax m = x0",
            same,
            f"argmin V={tuple(grid.node(argmin_v))},"
            f" argmax m={tuple(grid.node(argmax_m))}",
        )
    )

    # (V4) local exponent and constant
    radii, v_samples = radial_samples(V, potential.index)
    p_measured, _ = local_exponent(radii, v_samples)
    c0_measured = richardson_constant(V, potential.index, pspec.p)
    measured["p"] = p_measured
    measured["C0"] = c0_measured
    checks.append(
        AssumptionCheck(
            "(V4)",
            "local exponent of V equals p",
            _relative(p_measured, pspec.p) <= EXPONENT_TOL,
            f"measured {p_measured:.5g}, expected {pspec.p:.5g}",
        )
    )
    checks.append(
        AssumptionCheck(
            "(V4)",
            "V/|x-x0|^p tends to C0",
            _relative(c0_measured, pspec.C0) <= CONSTANT_TOL,
            f"measured {c0_measured:.5g}, expected {pspec.C0:.5g}",
        )
    )

    # (M1) bounds, unique maximum and the far ring
    m_at_x0 = float(m.values[weight.index])
    at_top = int(np.sum(m.values >= 1.0 - 1e-12))
    checks.append(
        AssumptionCheck(
            "(M1)",
            "m_inf < m <= 1 with m = 1 only at x0",
            abs(m_at_x0 - 1.0) <= 1e-12
            and at_top == 1
            and bool(np.all(m.values > wspec.m_inf))
            and bool(np.all(m.values <= 1.0 + 1e-12)),
            f"m(x0)={m_at_x0:.15g}",
        )
    )
    rw = grid.radius(weight.x0)
    ring_m = (rw >= TAIL_RING[0] * grid.L) & (rw <= TAIL_RING[1] * grid.L)
    bound = (1.0 - wspec.m_inf) / (
        1.0 + wspec.c2 * (TAIL_RING[0] * grid.L) ** wspec.q
    )
    far = np.abs(m.values[ring_m] - wspec.m_inf)
    checks.append(
        AssumptionCheck(
            "(M1)",
            "m approaches m_inf on the far ring",
            bool(np.all(far <= bound * (1 + 1e-12))),
            f"max |m - m_inf|={float(np.max(far)):.3e}, bound={bound:.3e}",
        )
    )
    radii_m, deficit = radial_samples(
        m.with_values(1.0 - m.values), weight.index
    )
    flat = deficit / radii_m ** (2 * s)
    checks.append(
        AssumptionCheck(
            "(M1)",
            "(1 - m)/|x-x0|^{2s} vanishes at x0",
            bool(flat[0] < flat[6]),
            f"ratio at 2h={flat[0]:.3e}, at 8h={flat[6]:.3e}",
        )
    )

    # (M2) local exponent and constant of 1 - m
    q_measured, _ = local_exponent(radii_m, deficit)
    cbar_measured = richardson_constant(
        m.with_values(1.0 - m.values), weight.index, wspec.q
    )
    measured["q"] = q_measured
    measured["C_bar"] = cbar_measured
    checks.append(
        AssumptionCheck(
            "(M2)",
            "local exponent of 1 - m equals q",
            _relative(q_measured, wspec.q) <= EXPONENT_TOL,
            f"measured {q_measured:.5g}, expected {wspec.q:.5g}",
        )
    )
    checks.append(
        AssumptionCheck(
            "(M2)",
            "(1 - m)/|x-x0|^q tends to C_bar",
            _relative(cbar_measured, wspec.C_bar) <= CONSTANT_TOL,
            f"measured {cbar_measured:.5g}, expected {wspec.C_bar:.5g}",
        )
    )

    report = ValidationReport(checks, measured)
    for failure in report.failures():
        logger.warning(
            "assumption %s failed: %s (%s)",
            failure.tag,
            failure.description,
            failure.detail,
        )
    return report
