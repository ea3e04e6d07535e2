"""
Cell-centered discretization of the half-section (0,R) x (-a,a) of the cylinder.

No sample sits on the axis r=0: the smallest radius is dr/2, so every 1/r
factor of the axisymmetric equations is evaluated at a positive radius.
Volume integrals use the midpoint rule for the measure 2*pi*r dr dz;
boundary integrals use second order extrapolation to the walls.
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from errors import ConfigError, DimensionError

MIN_CELLS = 4


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable (r, z) grid; arrays are indexed [i, j] with i radial."""

    R: float
    a: float
    Nr: int
    Nz: int
    dr: float = field(init=False)
    dz: float = field(init=False)
    r_centers: np.ndarray = field(init=False, repr=False)
    z_centers: np.ndarray = field(init=False, repr=False)
    r_faces: np.ndarray = field(init=False, repr=False)
    rr: np.ndarray = field(init=False, repr=False)
    zz: np.ndarray = field(init=False, repr=False)
    volume_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dr = self.R / self.Nr
        dz = 2.0 * self.a / self.Nz
        r_centers = (np.arange(self.Nr) + 0.5) * dr
        z_centers = -self.a + (np.arange(self.Nz) + 0.5) * dz
        rr, zz = np.meshgrid(r_centers, z_centers, indexing="ij")
        for name, value in (
            ("dr", dr),
            ("dz", dz),
            ("r_centers", r_centers),
            ("z_centers", z_centers),
            ("r_faces", np.arange(self.Nr + 1) * dr),
            ("rr", rr),
            ("zz", zz),
            ("volume_weights", 2.0 * np.pi * rr * dr * dz),
        ):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nr, self.Nz)

    @property
    def volume(self) -> float:
        """Exact volume 2*pi*a*R^2 of the cylinder."""
        return 2.0 * np.pi * self.a * self.R**2

    @property
    def h(self) -> float:
        """Largest spacing, used as the mesh size in refinement studies."""
        return max(self.dr, self.dz)

    def describe(self) -> dict[str, Any]:
        return {"R": self.R, "a": self.a, "Nr": self.Nr, "Nz": self.Nz}

    # ========= BOUNDARY TRACES =========

    def trace_wall(self, values: np.ndarray) -> np.ndarray:
        """Values extrapolated to r=R (one per z cell), second order."""
        v = _check_shape(values, self)
        return 1.5 * v[-1, :] - 0.5 * v[-2, :]

    def trace_lids(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values extrapolated to z=-a and z=+a (one per r cell)."""
        v = _check_shape(values, self)
        bottom = 1.5 * v[:, 0] - 0.5 * v[:, 1]
        top = 1.5 * v[:, -1] - 0.5 * v[:, -2]
        return bottom, top

    def trace_axis(self, values: np.ndarray) -> np.ndarray:
        """Values at r=0 for an even field, from the fit c0 + c2 r^2 through the two innermost cells."""
        v = _check_shape(values, self)
        return (9.0 * v[0, :] - v[1, :]) / 8.0

    def integrate_wall(self, trace: np.ndarray) -> float:
        """Integral over the lateral wall S1 (area element 2*pi*R dz)."""
        return float(np.sum(np.asarray(trace)) * 2.0 * np.pi * self.R * self.dz)

    def integrate_lids(self, bottom: np.ndarray, top: np.ndarray) -> float:
        """Integral over both lids S2 (area element 2*pi*r dr)."""
        w = 2.0 * np.pi * self.r_centers * self.dr
        return float(np.sum(w * np.asarray(bottom)) + np.sum(w * np.asarray(top)))


def _check_shape(values: Any, grid: Grid) -> np.ndarray:
    arr = np.asarray(getattr(values, "values", values), dtype=float)
    if arr.shape != grid.shape:
        raise DimensionError(f"Field shape {arr.shape} does not match grid shape {grid.shape}")
    return arr


def make_grid(R: float, a: float, Nr: int, Nz: int) -> Grid:
    """
    Build the cell-centered grid of the cylinder of radius R and height 2a.

    Args:
        R: Radius (> 0)
        a: Half height (> 0)
        Nr: Radial cell count (>= 4)
        Nz: Axial cell count (>= 4)

    Returns:
        Grid with dr = R/Nr, dz = 2a/Nz
    """
    if not R > 0:
        raise ConfigError(f"R must be positive, got {R}", key="R")
    if not a > 0:
        raise ConfigError(f"a must be positive, got {a}", key="a")
    for name, count in (("Nr", Nr), ("Nz", Nz)):
        if int(count) != count or count < MIN_CELLS:
            raise ConfigError(f"{name} must be an integer >= {MIN_CELLS}, got {count}", key=name)
    return Grid(float(R), float(a), int(Nr), int(Nz))


def integrate(values: Any, grid: Grid) -> float:
    """Volume integral of cell samples: sum of values * 2*pi*r dr dz."""
    arr = _check_shape(values, grid)
    return float(np.sum(arr * grid.volume_weights))
