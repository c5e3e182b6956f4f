"""Experiment configuration: JSON schema, validation and hashing."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Optional

from coefficients import PotentialSpec, WeightSpec
from constants import (
    GS_MAX_ITER,
    GS_TOL,
    IDENTITY_TOL,
    MAX_BOXES,
    MIN_MAX_STEPS,
    MIN_TOL,
    WORKERS_ENV,
    InitialGuess,
)
from pydantic import BaseModel, ValidationError, validator
from spectral_grid import Grid
from utils import AssumptionError, ConfigError, sha256_hex

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    class Config:
        extra = "forbid"
        allow_mutation = False


class ProblemConfig(_Section):
    d: int
    s: float

    @validator("d")
    def dimension(cls, v: int) -> int:
        if v not in (1, 2):
            raise ValueError("d must be 1 or 2")
        return v

    @validator("s")
    def order(cls, v: float) -> float:
        if not 0 < v <= 1:
            raise ValueError("s must lie in (0,1]")
        return v


class GridConfig(_Section):
    n: int
    L: float

    @validator("n")
    def power_of_two(cls, v: int) -> int:
        if v < 16 or v & (v - 1):
            raise ValueError("n must be a power of two and at least 16")
        return v

    @validator("L")
    def positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("L must be positive")
        return v


class PotentialConfig(_Section):
    v_inf: float
    x0: list[float]
    p: float
    beta: float
    c: float


class WeightConfig(_Section):
    m_inf: float
    q: float
    c2: float
    x0: Optional[list[float]] = None


class CoefficientsConfig(_Section):
    potential: PotentialConfig
    weight: WeightConfig


class SolverConfig(_Section):
    tol: float = MIN_TOL
    gs_tol: float = GS_TOL
    identity_tol: float = IDENTITY_TOL
    boxes: int = 1
    max_iter: int = GS_MAX_ITER
    max_steps: int = MIN_MAX_STEPS
    tau: Optional[float] = None
    seed: int = 0
    init: InitialGuess = InitialGuess.gaussian

    @validator("tol", "gs_tol", "identity_tol")
    def tolerance(cls, v: float) -> float:
        if not v >= 1e-12:
            raise ValueError("tolerances must be at least 1e-12")
        return v

    @validator("boxes")
    def box_count(cls, v: int) -> int:
        if not 1 <= v <= MAX_BOXES:
            raise ValueError(f"boxes must lie in 1..{MAX_BOXES}")
        return v

    @validator("tau")
    def step(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not v > 0:
            raise ValueError("tau must be positive")
        return v


class SweepConfig(_Section):
    k_min: int = 3
    k_max: int = 9
    chains: int = 1
    workers: int = 1
    a_ratios: Optional[list[float]] = None

    @validator("k_min")
    def first_index(cls, v: int) -> int:
        if v < 1:
            raise ValueError("k_min must be at least 1")
        return v

    @validator("chains", "workers")
    def at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v


class OutputConfig(_Section):
    dir: str = "out"


class ExperimentConfig(_Section):
    problem: ProblemConfig
    grid: GridConfig
    coefficients: CoefficientsConfig
    solver: SolverConfig = SolverConfig()
    sweep: SweepConfig = SweepConfig()
    output: OutputConfig = OutputConfig()

    def make_grid(self) -> Grid:
        return Grid(self.problem.d, self.grid.n, self.grid.L)

    def potential_spec(self) -> PotentialSpec:
        pc = self.coefficients.potential
        return PotentialSpec(
            v_inf=pc.v_inf, x0=tuple(pc.x0), p=pc.p, beta=pc.beta, c=pc.c
        )

    def weight_spec(self) -> WeightSpec:
        wc = self.coefficients.weight
        x0 = wc.x0 if wc.x0 is not None else self.coefficients.potential.x0
        return WeightSpec(m_inf=wc.m_inf, x0=tuple(x0), q=wc.q, c2=wc.c2)

    @property
    def k_values(self) -> list[int]:
        return list(range(self.sweep.k_min, self.sweep.k_max + 1))

    def workers(self) -> int:
        """Pool size, FLEP_WORKERS taking precedence over the config."""
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(
                    f"{WORKERS_ENV} must be an integer, got {env!r}"
                )
        return self.sweep.workers

    def plain(self) -> dict[str, Any]:
        return json.loads(self.json())

    def updated(self, **sections: dict[str, Any]) -> "ExperimentConfig":
        """Copy with some fields of some sections replaced (CLI overrides)."""
        data = self.plain()
        for name, values in sections.items():
            data[name].update(
                {k: v for k, v in values.items() if v is not None}
            )
        return validate_config(data)


def config_hash(cfg: ExperimentConfig) -> str:
    return sha256_hex(cfg.plain())


def problem_hash_of(d: int, s: float, n: int, L: float, gs_tol: float) -> str:
    """Hash of what a ground state depends on."""
    return sha256_hex(
        {
            "problem": {"d": d, "s": float(s)},
            "grid": {"n": n, "L": float(L)},
            "gs_tol": float(gs_tol),
        }
    )


def problem_hash(cfg: ExperimentConfig) -> str:
    return problem_hash_of(
        cfg.problem.d, cfg.problem.s, cfg.grid.n, cfg.grid.L, cfg.solver.gs_tol
    )


def _semantic_violations(cfg: ExperimentConfig) -> list[str]:
    d, s = cfg.problem.d, cfg.problem.s
    out = []
    out += [
        f"coefficients.potential: {v}"
        for v in cfg.potential_spec().violations(s, d)
    ]
    out += [
        f"coefficients.weight: {v}" for v in cfg.weight_spec().violations(s, d)
    ]
    quarter = cfg.grid.L / 4
    for name, spec in (
        ("potential", cfg.potential_spec()),
        ("weight", cfg.weight_spec()),
    ):
        if any(abs(x) > quarter for x in spec.x0):
            out.append(
                f"coefficients.{name}.x0: (V3): x0 must lie in the central"
                " half of the box"
            )
    center = cfg.coefficients.potential.x0
    weight_center = cfg.coefficients.weight.x0
    if weight_center is not None and list(weight_center) != list(center):
        out.append(
            "coefficients.weight.x0: (M1): the maximum of m must sit at the"
            " minimum of V"
        )
    if cfg.sweep.k_max < cfg.sweep.k_min:
        out.append("sweep.k_max: must not be below sweep.k_min")
    return out


def validate_config(data: dict[str, Any]) -> ExperimentConfig:
    """Validate a config payload, raising one error that lists every violation."""
    try:
        cfg = ExperimentConfig.parse_obj(data)
    except ValidationError as exc:
        violations = [
            ".".join(str(part) for part in err["loc"]) + ": " + err["msg"]
            for err in exc.errors()
        ]
        raise ConfigError(violations)
    violations = _semantic_violations(cfg)
    if violations:
        if any("(V" in v or "(M" in v for v in violations):
            raise AssumptionError(violations)
        raise ConfigError(violations)
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})")
    cfg = validate_config(data)
    logger.debug("loaded config %s (hash %s)", path, config_hash(cfg)[:12])
    return cfg
