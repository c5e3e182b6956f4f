"""Definition of constants, types and shared CLI options"""

from enum import Enum
from pathlib import Path

import typer

__version__ = "0.1.0"

# FLEP binary field format
FLEP_MAGIC = b"FLEP"
FLEP_VERSION = 1
HASH_TAG = b"HASH"

# Exit codes of the command line interface
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

# Ground-state solver defaults
GS_TOL = 1e-10
GS_MAX_ITER = 2000
IDENTITY_TOL = 1e-6
MAX_BOXES = 4  # box doublings for the identity certificate
COLLAPSE_THRESHOLD = 1e-8

# Constrained minimizer defaults
MIN_TOL = 1e-7
MIN_MAX_STEPS = 20000
TAU_GROWTH = 1.25
TAU_MAX_FACTOR = 50.0
RESOLVED_POINTS = 4  # epsilon must span this many grid spacings
MULTIPLIER_MISMATCH = 1e-4

# Sweep defaults
MIN_FIT_POINTS = 4
BALANCED_TOL = 1e-12
SUBADDITIVITY_MARGIN = 1e-4  # I_parts - I_whole must exceed this

# Radial windows, as fractions of the box length L
DECAY_WINDOW = (0.25, 0.40)
TRUNCATION_RADIUS = 0.40
TAIL_RING = (0.35, 0.45)

# Worker pool override
WORKERS_ENV = "FLEP_WORKERS"

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"
DEFAULT_CONFIG = CONFIG_DIR / "defaults.json"


class Case(str, Enum):
    """Which coefficient dominates the blow-up rate."""

    Q_DOMINANT = "Q_DOMINANT"
    P_DOMINANT = "P_DOMINANT"
    BALANCED = "BALANCED"


class InitialGuess(str, Enum):
    gaussian = "gaussian"
    plateau = "plateau"


# Argument and Option types
ConfigOption = typer.Option(
    default=None,
    exists=True,
    dir_okay=False,
    help="Path to an experiment config (JSON).",
)
GroundStateOption = typer.Option(
    default=None,
    exists=True,
    dir_okay=False,
    help="Reuse a stored ground state (FLEP file) instead of solving.",
)
ReportOption = typer.Option(
    default=None, dir_okay=False, help="Write the JSON report to this path."
)
OutOption = typer.Option(
    default=None, dir_okay=False, help="Write the resulting field here."
)
SeedOption = typer.Option(
    default=None, help="Seed of the initial-guess perturbation."
)
