"""
Field containers and cylindrical finite-difference operators.

Fields are sampled at cell centers of a Grid. Each ScalarField carries its
behavior at the axis (parity) and at the walls (boundary tags), and every
derivative is taken on a padded copy whose ghost cells follow those tags:

- axis:  even -> ghost = mirror, odd -> ghost = -mirror,
         odd2 (u = b1 r^2 + b2 r^3 + ...) -> ghost = mirror, the r^2 leading order being even
- walls: dirichlet -> ghost = -edge (zero on the wall),
         neumann -> ghost = edge (zero normal derivative),
         extrapolate -> quadratic extrapolation (no boundary information)

The algebraic relations between swirl, vorticity, stream functions and
velocity live here too; everything that needs an elliptic solve lives in
elliptic.py.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from errors import ContractError, DimensionError, DomainError
from grid import Grid

# ========= TAGS =========

EVEN = "even"
ODD = "odd"
ODD2 = "odd2"
PARITIES = (EVEN, ODD, ODD2)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
EXTRAPOLATE = "extrapolate"
WALL_CONDITIONS = (DIRICHLET, NEUMANN, EXTRAPOLATE)

_AXIS_SIGN = {EVEN: 1.0, ODD: -1.0, ODD2: 1.0}
_R_DERIVATIVE_PARITY = {EVEN: ODD, ODD: EVEN, ODD2: ODD}

# Powers of r used when fitting the innermost samples, per parity.
# Odd fields (psi, omega_phi) expand in odd powers; v_r is fitted with
# RADIAL_VELOCITY_POWERS instead.
_EXPANSION_POWERS = {EVEN: (0, 2), ODD: (1, 3), ODD2: (2, 3)}
RADIAL_VELOCITY_POWERS = (1, 2)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell-centered samples plus the tags that drive ghost-cell filling."""

    values: np.ndarray
    parity: str = EVEN
    bc_r: str = EXTRAPOLATE
    bc_z: str = EXTRAPOLATE

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.parity not in PARITIES:
            raise ContractError(f"Unknown parity '{self.parity}', expected one of {PARITIES}")
        for tag in (self.bc_r, self.bc_z):
            if tag not in WALL_CONDITIONS:
                raise ContractError(f"Unknown wall condition '{tag}', expected one of {WALL_CONDITIONS}")

    def with_bc(self, bc_r: Optional[str] = None, bc_z: Optional[str] = None) -> "ScalarField":
        return replace(self, bc_r=bc_r or self.bc_r, bc_z=bc_z or self.bc_z)

    def scaled(self, factor: float) -> "ScalarField":
        return replace(self, values=self.values * factor)

    @classmethod
    def zeros(cls, grid: Grid, parity: str = EVEN, bc_r: str = EXTRAPOLATE,
              bc_z: str = EXTRAPOLATE) -> "ScalarField":
        return cls(np.zeros(grid.shape), parity, bc_r, bc_z)


@dataclass(frozen=True, eq=False)
class VelocityField:
    v_r: ScalarField
    v_phi: ScalarField
    v_z: ScalarField


@dataclass(frozen=True, eq=False)
class VorticityField:
    omega_r: ScalarField
    omega_phi: ScalarField
    omega_z: ScalarField


@dataclass(frozen=True, eq=False)
class State:
    """
    Fields at one time level. Only u and Gamma are evolved; psi1, v and Phi
    are reconstructed from them.
    """

    t: float
    u: ScalarField
    Gamma: ScalarField
    psi1: ScalarField
    v: VelocityField
    Phi: ScalarField
    elliptic_residual: float = 0.0
    phi_shadow: Optional[ScalarField] = None


@dataclass(frozen=True, eq=False)
class DerivedForcing:
    """Forcing quantities entering the swirl, Gamma and Phi equations."""

    f0: np.ndarray
    F_r: np.ndarray
    F_phi: np.ndarray
    F_z: np.ndarray
    Fbar_r: np.ndarray
    Fbar_phi: np.ndarray
    f1: np.ndarray
    F1: np.ndarray


@dataclass(frozen=True, eq=False)
class Forcing:
    """
    Body force f = (f_r, f_phi, f_z) at one time.

    F_phi_exact may carry the azimuthal curl component in closed form when the
    scenario knows it; otherwise it is differenced from f_r and f_z.
    """

    f_r: ScalarField
    f_phi: ScalarField
    f_z: ScalarField
    F_phi_exact: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def zero(cls, grid: Grid) -> "Forcing":
        return cls(ScalarField.zeros(grid, ODD), ScalarField.zeros(grid, ODD), ScalarField.zeros(grid, EVEN))

    def is_zero(self) -> bool:
        return not (np.any(self.f_r.values) or np.any(self.f_phi.values) or np.any(self.f_z.values))

    def magnitude_sq(self) -> np.ndarray:
        return self.f_r.values**2 + self.f_phi.values**2 + self.f_z.values**2

    def derived(self, grid: Grid) -> DerivedForcing:
        r = grid.rr
        f0 = r * self.f_phi.values
        F_r = -d_dz(self.f_phi, grid).values
        if self.F_phi_exact is not None:
            F_phi = np.asarray(self.F_phi_exact, dtype=float)
        else:
            F_phi = d_dz(self.f_r, grid).values - d_dr(self.f_z, grid).values
        F_z = d_dr(ScalarField(f0, ODD2, self.f_phi.bc_r, self.f_phi.bc_z), grid).values / r
        return DerivedForcing(
            f0=f0,
            F_r=F_r,
            F_phi=F_phi,
            F_z=F_z,
            Fbar_r=F_r / r,
            Fbar_phi=F_phi / r,
            f1=self.f_phi.values / r,
            F1=F_phi / r,
        )


# ========= GHOST CELLS =========

def _wall_ghost(edge: np.ndarray, inner: np.ndarray, inner2: np.ndarray, condition: str) -> np.ndarray:
    if condition == DIRICHLET:
        return -edge
    if condition == NEUMANN:
        return edge.copy()
    return 3.0 * edge - 3.0 * inner + inner2


def pad(f: ScalarField, grid: Grid) -> np.ndarray:
    """Return the (Nr+2, Nz+2) array of f with one ghost layer on every side."""
    v = f.values
    if v.shape != grid.shape:
        raise DimensionError(f"Field shape {v.shape} does not match grid shape {grid.shape}")
    Nr, Nz = v.shape
    radial = np.empty((Nr + 2, Nz))
    radial[1:-1] = v
    radial[0] = _AXIS_SIGN[f.parity] * v[0]
    radial[-1] = _wall_ghost(v[-1], v[-2], v[-3], f.bc_r)

    padded = np.empty((Nr + 2, Nz + 2))
    padded[:, 1:-1] = radial
    padded[:, 0] = _wall_ghost(radial[:, 0], radial[:, 1], radial[:, 2], f.bc_z)
    padded[:, -1] = _wall_ghost(radial[:, -1], radial[:, -2], radial[:, -3], f.bc_z)
    return padded


# ========= DERIVATIVES =========

def d_dr(f: ScalarField, grid: Grid) -> ScalarField:
    """Centered radial derivative; parity flips (even <-> odd)."""
    p = pad(f, grid)
    values = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2.0 * grid.dr)
    return ScalarField(values, _R_DERIVATIVE_PARITY[f.parity])


def d_dz(f: ScalarField, grid: Grid) -> ScalarField:
    """Centered axial derivative; parity is kept."""
    p = pad(f, grid)
    values = (p[1:-1, 2:] - p[1:-1, :-2]) / (2.0 * grid.dz)
    return ScalarField(values, f.parity)


def d2_dr2(f: ScalarField, grid: Grid) -> ScalarField:
    p = pad(f, grid)
    values = (p[2:, 1:-1] - 2.0 * p[1:-1, 1:-1] + p[:-2, 1:-1]) / grid.dr**2
    return ScalarField(values, EVEN if f.parity == ODD2 else f.parity)


def d2_dz2(f: ScalarField, grid: Grid) -> ScalarField:
    p = pad(f, grid)
    values = (p[1:-1, 2:] - 2.0 * p[1:-1, 1:-1] + p[1:-1, :-2]) / grid.dz**2
    return ScalarField(values, f.parity)


def d2_drdz(f: ScalarField, grid: Grid) -> ScalarField:
    return d_dz(d_dr(f, grid), grid)


def gradient_sq(f: ScalarField, grid: Grid) -> np.ndarray:
    """Pointwise |grad f|^2 = f_r^2 + f_z^2 of an axisymmetric scalar."""
    return d_dr(f, grid).values ** 2 + d_dz(f, grid).values ** 2


def laplacian(f: ScalarField, grid: Grid) -> np.ndarray:
    """Axisymmetric Laplacian f_rr + f_r/r + f_zz."""
    return (d2_dr2(f, grid).values + d_dr(f, grid).values / grid.rr + d2_dz2(f, grid).values)


def advective_derivative(f: ScalarField, v: VelocityField, grid: Grid, scheme: str = "centered") -> np.ndarray:
    """
    v_r f_r + v_z f_z.

    "upwind" uses donor-cell differences of minmod-limited face values, which
    write the update as a convex combination of neighbors as long as
    1.5 * dt * (|v_r|/dr + |v_z|/dz) <= 1. "centered" uses plain centered
    differences.
    """
    p = pad(f, grid)
    vr = v.v_r.values
    vz = v.v_z.values
    if scheme == "centered":
        fr = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2.0 * grid.dr)
        fz = (p[1:-1, 2:] - p[1:-1, :-2]) / (2.0 * grid.dz)
        return vr * fr + vz * fz
    if scheme != "upwind":
        raise DomainError(f"Unknown advection scheme '{scheme}'")
    return vr * _limited_upwind(p, vr, axis=0, h=grid.dr) + vz * _limited_upwind(p, vz, axis=1, h=grid.dz)


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _limited_upwind(p: np.ndarray, velocity: np.ndarray, axis: int, h: float) -> np.ndarray:
    # Work along `axis` with the other axis restricted to interior cells
    q = p[:, 1:-1] if axis == 0 else p[1:-1, :].T
    vel = velocity if axis == 0 else velocity.T
    slope = np.zeros_like(q)
    slope[1:-1] = _minmod(q[2:] - q[1:-1], q[1:-1] - q[:-2])
    left_face = q + 0.5 * slope    # value at the right face reconstructed from the left cell
    right_face = q - 0.5 * slope   # value at the left face reconstructed from the right cell
    forward = (left_face[1:-1] - left_face[:-2]) / h
    backward = (right_face[2:] - right_face[1:-1]) / h
    derivative = np.where(vel > 0.0, forward, backward)
    return derivative if axis == 0 else derivative.T


# ========= ALGEBRAIC RELATIONS =========

def velocity_from_stream(psi1: ScalarField, grid: Grid) -> VelocityField:
    """
    Meridional velocity from the modified stream function:
    v_r = -r psi1_z, v_z = r psi1_r + 2 psi1. v_phi is left zero.
    """
    if psi1.parity != EVEN:
        raise ContractError(f"psi1 must have even parity, got '{psi1.parity}'")
    r = grid.rr
    v_r = -r * d_dz(psi1, grid).values
    v_z = r * d_dr(psi1, grid).values + 2.0 * psi1.values
    on_wall = psi1.bc_r == DIRICHLET
    on_lids = psi1.bc_z == DIRICHLET
    return VelocityField(
        v_r=ScalarField(v_r, ODD, DIRICHLET if on_wall else EXTRAPOLATE, EXTRAPOLATE),
        v_phi=ScalarField.zeros(grid, ODD, DIRICHLET, NEUMANN),
        v_z=ScalarField(v_z, EVEN, EXTRAPOLATE, DIRICHLET if on_lids else EXTRAPOLATE),
    )


def vorticity_from_velocity(v: VelocityField, grid: Grid) -> VorticityField:
    """omega_r = -v_phi_z, omega_phi = v_r_z - v_z_r, omega_z = v_phi_r + v_phi/r."""
    omega_r = -d_dz(v.v_phi, grid).values
    omega_phi = d_dz(v.v_r, grid).values - d_dr(v.v_z, grid).values
    omega_z = d_dr(v.v_phi, grid).values + v.v_phi.values / grid.rr
    return VorticityField(
        omega_r=ScalarField(omega_r, ODD),
        omega_phi=ScalarField(omega_phi, ODD),
        omega_z=ScalarField(omega_z, EVEN),
    )


def omega_z_from_swirl(u: ScalarField, grid: Grid) -> ScalarField:
    """omega_z = u_r / r, the swirl route to the axial vorticity."""
    return ScalarField(d_dr(u, grid).values / grid.rr, EVEN)


def phi_from_swirl(u: ScalarField, grid: Grid) -> ScalarField:
    """Phi = omega_r / r = -u_z / r^2, even and finite at the axis."""
    if u.parity != ODD2:
        raise ContractError(f"u must have odd2 parity, got '{u.parity}'")
    return ScalarField(-d_dz(u, grid).values / grid.rr**2, EVEN, DIRICHLET, DIRICHLET)


def divergence(v: VelocityField, grid: Grid) -> ScalarField:
    """(1/r)(r v_r)_r + v_z_z, differencing the even flux r v_r."""
    flux = ScalarField(grid.rr * v.v_r.values, EVEN, v.v_r.bc_r, v.v_r.bc_z)
    values = d_dr(flux, grid).values / grid.rr + d_dz(v.v_z, grid).values
    return ScalarField(values, EVEN)


def build_state(t: float, u: np.ndarray, Gamma: np.ndarray, psi1: np.ndarray, grid: Grid,
                elliptic_residual: float = 0.0, phi_shadow: Optional[np.ndarray] = None) -> State:
    """Assemble a State from the evolved pair (u, Gamma) and a solved psi1."""
    u_field = ScalarField(u, ODD2, DIRICHLET, NEUMANN)
    psi1_field = ScalarField(psi1, EVEN, DIRICHLET, DIRICHLET)
    meridional = velocity_from_stream(psi1_field, grid)
    v_phi = ScalarField(u_field.values / grid.rr, ODD, DIRICHLET, NEUMANN)
    return State(
        t=float(t),
        u=u_field,
        Gamma=ScalarField(Gamma, EVEN, DIRICHLET, DIRICHLET),
        psi1=psi1_field,
        v=VelocityField(meridional.v_r, v_phi, meridional.v_z),
        Phi=phi_from_swirl(u_field, grid),
        elliptic_residual=float(elliptic_residual),
        phi_shadow=None if phi_shadow is None else ScalarField(phi_shadow, EVEN, DIRICHLET, DIRICHLET),
    )


# ========= AXIS EXPANSIONS =========

@dataclass(frozen=True, eq=False)
class AxisExpansion:
    """Leading two coefficients c_k(z) of f ~ c1 r^p1 + c2 r^p2 near the axis."""

    parity: str
    powers: tuple[int, int]
    coefficients: np.ndarray  # shape (2, Nz)
    residual: float
    n_points: int


def axis_expansion_check(f: ScalarField, grid: Grid, n_points: int = 3,
                         powers: Optional[tuple[int, int]] = None) -> AxisExpansion:
    """
    Fit the tagged parity expansion to the innermost radial samples of every
    z column by least squares and return the coefficients with the largest
    fit residual.

    `powers` overrides the basis implied by the parity tag.
    """
    if n_points < 3 or n_points > grid.Nr:
        raise DomainError(f"axis fit needs 3 <= n_points <= Nr, got {n_points}")
    powers = tuple(powers) if powers is not None else _EXPANSION_POWERS[f.parity]
    if len(powers) != 2 or powers[0] == powers[1]:
        raise DomainError(f"axis fit needs two distinct powers, got {powers}")
    r = grid.r_centers[:n_points]
    basis = np.stack([r**p for p in powers], axis=1)
    samples = f.values[:n_points, :]
    coefficients, *_ = np.linalg.lstsq(basis, samples, rcond=None)
    residual = float(np.max(np.abs(basis @ coefficients - samples))) if samples.size else 0.0
    return AxisExpansion(f.parity, powers, coefficients, residual, n_points)


def extrapolate_to_axis(f: ScalarField, grid: Grid) -> np.ndarray:
    """Value at r=0 implied by the parity expansion (zero for odd and odd2)."""
    expansion = axis_expansion_check(f, grid)
    if expansion.powers[0] == 0:
        return expansion.coefficients[0]
    return np.zeros(grid.Nz)
