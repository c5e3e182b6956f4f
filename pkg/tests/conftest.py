import sys
from pathlib import Path

import numpy as np
import pytest

# the package is a flat module tree run as a script
SRC = Path(__file__).resolve().parents[1] / "src" / "flep"
sys.path.insert(0, str(SRC))

from coefficients import (  # noqa: E402
    PotentialSpec,
    WeightSpec,
    realize_potential,
    realize_weight,
)
from ground_state import certify_ground_state, solve_ground_state  # noqa: E402
from minimizer import MinimizationContext  # noqa: E402
from spectral_grid import Field, Grid  # noqa: E402

CONFIG_DIR = SRC.parents[1] / "configs"


def quintic_soliton(x):
    """Exact ground state of -U'' + U = U^5 on the line."""
    return 3.0**0.25 / np.sqrt(np.cosh(2.0 * x))


@pytest.fixture(scope="session")
def grid_1d():
    return Grid(1, 1024, 40.0)


@pytest.fixture(scope="session")
def small_grid_1d():
    return Grid(1, 256, 24.0)


@pytest.fixture(scope="session")
def grid_2d():
    return Grid(2, 64, 24.0)


@pytest.fixture(scope="session")
def exact_soliton(grid_1d):
    return Field.from_function(grid_1d, quintic_soliton)


@pytest.fixture(scope="session")
def exact_ground(exact_soliton):
    return certify_ground_state(exact_soliton, 1.0)


@pytest.fixture(scope="session")
def ground_1d(grid_1d):
    return solve_ground_state(grid_1d, 1.0)


@pytest.fixture(scope="session")
def small_ground_1d(small_grid_1d):
    return solve_ground_state(small_grid_1d, 1.0)


@pytest.fixture(scope="session")
def potential_spec_1d():
    return PotentialSpec(v_inf=1.0, x0=(0.0,), p=2.0, beta=1.0, c=0.1)


@pytest.fixture(scope="session")
def weight_spec_1d():
    return WeightSpec(m_inf=0.5, x0=(0.0,), q=3.0, c2=0.02)


@pytest.fixture(scope="session")
def coefficients_1d(small_grid_1d, potential_spec_1d, weight_spec_1d):
    potential = realize_potential(potential_spec_1d, small_grid_1d, 1.0)
    weight = realize_weight(weight_spec_1d, small_grid_1d, 1.0)
    return potential, weight


@pytest.fixture(scope="session")
def context_1d(coefficients_1d, small_ground_1d):
    potential, weight = coefficients_1d
    return MinimizationContext(
        V=potential.V,
        m=weight.m,
        a=0.5 * small_ground_1d.a_star,
        s=1.0,
        v_inf=potential.spec.v_inf,
        a_star=small_ground_1d.a_star,
        x0=potential.x0,
    )


@pytest.fixture
def config_1d():
    """Plain config payload of a small one-dimensional problem."""
    return {
        "problem": {"d": 1, "s": 1.0},
        "grid": {"n": 256, "L": 24.0},
        "coefficients": {
            "potential": {
                "v_inf": 1.0,
                "x0": [0.0],
                "p": 2.0,
                "beta": 1.0,
                "c": 0.1,
            },
            "weight": {"m_inf": 0.5, "q": 3.0, "c2": 0.02},
        },
        "solver": {"tol": 1e-7, "seed": 0},
        "sweep": {"k_min": 2, "k_max": 5},
    }
