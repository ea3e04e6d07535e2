"""
Configuration module for the axisymmetric Navier-Stokes simulator.

This module centralizes solver tolerances, certificate defaults and output
locations. Every setting can be overridden through an environment variable
so batch jobs and the report service can be tuned without touching run files.
"""

import os
from typing import List, Tuple

VERSION = "0.3.0"

# ========= OUTPUT CONFIGURATION =========

def get_output_root() -> str:
    """Directory under which relative run directories are created."""
    return os.getenv("AXISYM_OUTPUT_ROOT", "runs")


def get_log_level() -> str:
    """Logging level name for the command line front end."""
    return os.getenv("AXISYM_LOG_LEVEL", "INFO").upper()


# ========= SOLVER CONFIGURATION =========

def _get_float(env_var: str, default: float) -> float:
    """Get a float from environment or use default."""
    value = os.getenv(env_var)
    return float(value) if value else default


def _get_int(env_var: str, default: int) -> int:
    """Get an integer from environment or use default."""
    value = os.getenv(env_var)
    return int(value) if value else default


def _get_float_list(env_var: str, default: List[float]) -> Tuple[float, ...]:
    """Get a comma separated float list from environment or use default."""
    env_value = os.getenv(env_var)
    if env_value:
        return tuple(float(item.strip()) for item in env_value.split(",") if item.strip())
    return tuple(default)


ELLIPTIC_RTOL = _get_float("AXISYM_ELLIPTIC_RTOL", 1e-10)
ELLIPTIC_MAXITER_FACTOR = _get_int("AXISYM_ELLIPTIC_MAXITER_FACTOR", 50)  # times (Nr + Nz)
ELLIPTIC_METHOD = os.getenv("AXISYM_ELLIPTIC_METHOD", "cg")  # "cg" or "direct"
DIRECT_SOLVE_MAX_CELLS = _get_int("AXISYM_DIRECT_SOLVE_MAX_CELLS", 4096)

# Residual accepted when a report checks that psi1 really solves the elliptic problem
ELLIPTIC_CONTRACT_RTOL = _get_float("AXISYM_ELLIPTIC_CONTRACT_RTOL", 1e-6)

DEFAULT_CFL_SAFETY = _get_float("AXISYM_CFL_SAFETY", 0.5)
# Limited upwind slopes can amplify the donor-cell weight by 3/2
MONOTONE_CFL_LIMIT = 2.0 / 3.0

# ========= CERTIFICATE CONFIGURATION =========

ENERGY_TOL = _get_float("AXISYM_ENERGY_TOL", 1e-3)
MAX_PRINCIPLE_TOL_MONOTONE = _get_float("AXISYM_MAX_PRINCIPLE_TOL_MONOTONE", 1e-10)
MAX_PRINCIPLE_TOL = _get_float("AXISYM_MAX_PRINCIPLE_TOL", 1e-3)
SUP_BOUND_TOL = _get_float("AXISYM_SUP_BOUND_TOL", 1e-3)
HARDY_TOL = _get_float("AXISYM_HARDY_TOL", 1e-12)

DEFAULT_EPS0 = _get_float("AXISYM_EPS0", 0.1)
DEFAULT_DELTA = _get_float("AXISYM_DELTA", 0.1)
DEFAULT_S_VALUES = _get_float_list("AXISYM_S_VALUES", [4.0, 6.0, 10.0])
DEFAULT_C0 = _get_float("AXISYM_C0", 0.5)
DEFAULT_CONSTANT_C = _get_float("AXISYM_CONSTANT_C", 1.0)
DEFAULT_INTERACTION_D = _get_float("AXISYM_INTERACTION_D", 0.5)

FIXED_POINT_TOL = _get_float("AXISYM_FIXED_POINT_TOL", 1e-14)
FIXED_POINT_MAXITER = _get_int("AXISYM_FIXED_POINT_MAXITER", 10**6)
FIXED_POINT_DIVERGENCE_FACTOR = 10.0

# Fraction of the smallness threshold targeted by the small-data scenario
SMALL_DATA_MARGIN = _get_float("AXISYM_SMALL_DATA_MARGIN", 0.5)

# Relative spread above which tracked ratios are reported as unstable across runs
RATIO_STABILITY_TOL = _get_float("AXISYM_RATIO_STABILITY_TOL", 0.25)

# ========= RENDERING CONFIGURATION =========

def _get_img_size() -> Tuple[int, int]:
    """Get heatmap size from environment or use default."""
    width = int(os.getenv("AXISYM_IMG_WIDTH", "256"))
    height = int(os.getenv("AXISYM_IMG_HEIGHT", "512"))
    return (width, height)


IMG_SIZE = _get_img_size()
GIF_FRAME_MS = _get_int("AXISYM_GIF_FRAME_MS", 120)
