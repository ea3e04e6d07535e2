"""
Sparse cylindrical operators and the stream-function solves.

Three radial operators share the assembly below, each combined with the
standard three-point z stencil through Kronecker products (flat index i*Nz + j):

- "modified": (1/r^3)(r^3 f_r)_r + f_zz = Delta f + (2/r) f_r, finite-volume
  form over the cell measures V_i = (r_{i+1/2}^4 - r_{i-1/2}^4)/4, Dirichlet on S.
  Used for psi1, Gamma and Phi.
- "stream":   (1/r)(r f_r)_r - f/r^2 + f_zz, Dirichlet on S. Used for psi.
- "swirl":    r((1/r) f_r)_r + f_zz = f_rr - f_r/r + f_zz, Dirichlet at r=R and
  Neumann at z=+-a. Used for u. The axis row takes the face flux (1/r)u_r = 2u_0/r_0^2
  of an r^2 profile.

Every operator L is symmetric after multiplying by its diagonal weights, so
-W L is symmetric positive definite and is solved with Jacobi preconditioned
conjugate gradients.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

import config
from errors import ContractError, DomainError, NumericalError
from fields import (DIRICHLET, EVEN, ODD, ScalarField, d2_dr2, d2_drdz, d2_dz2, d_dr, d_dz,
                    pad)
from grid import Grid, integrate

logger = logging.getLogger(__name__)

MODIFIED = "modified"
STREAM = "stream"
SWIRL = "swirl"
OPERATOR_KINDS = (MODIFIED, STREAM, SWIRL)


# ========= ASSEMBLY =========

@dataclass(frozen=True, eq=False)
class RadialStencil:
    """
    Three-point radial stencil c_up (f_{i+1} - f_i) - c_down (f_i - f_{i-1}) + center f_i
    and the weights that make it symmetric.
    """

    c_up: np.ndarray
    c_down: np.ndarray
    center: np.ndarray
    weights: np.ndarray


def radial_stencil(kind: str, grid: Grid) -> RadialStencil:
    h = grid.dr
    r = grid.r_centers
    lower = grid.r_faces[:-1]
    upper = grid.r_faces[1:]
    center = np.zeros_like(r)

    if kind == MODIFIED:
        volumes = (upper**4 - lower**4) / 4.0
        c_up = upper**3 / (volumes * h)
        c_down = lower**3 / (volumes * h)
        weights = volumes
    elif kind == STREAM:
        c_up = upper / (r * h**2)
        c_down = lower / (r * h**2)
        center = -1.0 / r**2
        weights = r.copy()
    elif kind == SWIRL:
        c_up = r / (h**2 * upper)
        c_down = np.zeros_like(r)
        c_down[1:] = r[1:] / (h**2 * lower[1:])
        # axis face flux (1/r) u_r = 2 u_0 / r_0^2 = 8 u_0 / h^2, scaled by r_0/h
        center[0] = -(r[0] / h) * 8.0 / h**2
        weights = 1.0 / r
    else:
        raise DomainError(f"Unknown operator kind '{kind}', expected one of {OPERATOR_KINDS}")
    return RadialStencil(c_up, c_down, center, weights)


def _radial_operator(kind: str, grid: Grid) -> tuple[sp.csr_matrix, np.ndarray]:
    """Return the (Nr x Nr) radial operator and its symmetrizing weights."""
    stencil = radial_stencil(kind, grid)
    diag = -(stencil.c_up + stencil.c_down) + stencil.center
    # Dirichlet at r=R: ghost = -edge
    diag[-1] -= stencil.c_up[-1]
    matrix = sp.diags([stencil.c_down[1:], diag, stencil.c_up[:-1]], [-1, 0, 1], format="csr")
    return matrix, stencil.weights


def _axial_operator(grid: Grid, condition: str) -> sp.csr_matrix:
    n = grid.Nz
    inv = 1.0 / grid.dz**2
    diag = np.full(n, -2.0 * inv)
    edge = -3.0 * inv if condition == DIRICHLET else -1.0 * inv
    diag[0] = edge
    diag[-1] = edge
    off = np.full(n - 1, inv)
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def apply_stencil(kind: str, f: ScalarField, grid: Grid) -> np.ndarray:
    """
    The operator of `kind` evaluated on f with ghost cells from f's own tags.

    Agrees with the assembled matrix when f carries that operator's boundary
    conditions; with other tags it is the same interior stencil.
    """
    stencil = radial_stencil(kind, grid)
    p = pad(f, grid)
    c = p[1:-1, 1:-1]
    radial = (stencil.c_up[:, None] * (p[2:, 1:-1] - c)
              - stencil.c_down[:, None] * (c - p[:-2, 1:-1])
              + stencil.center[:, None] * c)
    axial = (p[1:-1, 2:] - 2.0 * c + p[1:-1, :-2]) / grid.dz**2
    return radial + axial


# ========= OPERATOR =========

@dataclass(eq=False)
class EllipticOperator:
    """
    Assembled operator L on a grid.

    `solve` returns x with -L x = b, i.e. the stream-function problems
    -Delta psi1 - (2/r) psi1_r = Gamma and -Delta psi + psi/r^2 = omega_phi.
    """

    kind: str
    grid: Grid
    matrix: sp.csr_matrix = field(repr=False)
    weights: np.ndarray = field(repr=False)
    method: str = "cg"
    _factors: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.grid.Nr * self.grid.Nz

    def apply(self, values: np.ndarray) -> np.ndarray:
        """L applied to cell values of shape (Nr, Nz)."""
        return (self.matrix @ np.asarray(values, dtype=float).ravel()).reshape(self.grid.shape)

    def weighted_matrix(self) -> sp.csr_matrix:
        """-W L, symmetric positive definite."""
        return (-(sp.diags(self.weights) @ self.matrix)).tocsr()

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Inner product in which the operator is self-adjoint."""
        return float(np.sum(self.weights * np.ravel(f) * np.ravel(g)))

    def residual(self, x: np.ndarray, rhs: np.ndarray) -> float:
        """Weighted relative residual |W(b + L x)| / |W b| (0 when both vanish)."""
        b = np.asarray(rhs, dtype=float).ravel()
        r = self.weights * (b + self.matrix @ np.ravel(x))
        scale = np.linalg.norm(self.weights * b)
        norm = float(np.linalg.norm(r))
        if scale == 0.0:
            return 0.0 if norm == 0.0 else float("inf")
        return norm / float(scale)

    def solve(self, rhs: np.ndarray, x0: Optional[np.ndarray] = None) -> tuple[np.ndarray, float]:
        """
        Solve -L x = rhs.

        Args:
            rhs: Right-hand side on the grid
            x0: Optional warm start (previous solution)

        Returns:
            (x on the grid, weighted relative residual)
        """
        b = np.asarray(rhs, dtype=float).ravel()
        if not np.all(np.isfinite(b)):
            raise NumericalError(f"Non-finite right-hand side for the {self.kind} problem")
        if not np.any(b):
            return np.zeros(self.grid.shape), 0.0

        if self.method == "direct":
            x = self._direct_factor().solve(b)
        elif self.method == "cg":
            x = self._cg(b, x0)
        else:
            raise DomainError(f"Unknown elliptic method '{self.method}'")

        residual = self.residual(x, b)
        if not np.isfinite(residual) or residual > max(config.ELLIPTIC_RTOL, 1e-9) * 10.0:
            raise NumericalError(
                f"{self.kind} elliptic solve did not converge (residual {residual:.3e})",
                residual=residual,
            )
        return x.reshape(self.grid.shape), residual

    def _cg(self, b: np.ndarray, x0: Optional[np.ndarray]) -> np.ndarray:
        system = self.weighted_matrix()
        preconditioner = sp.diags(1.0 / system.diagonal())
        maxiter = config.ELLIPTIC_MAXITER_FACTOR * (self.grid.Nr + self.grid.Nz)
        start = None if x0 is None else np.asarray(x0, dtype=float).ravel()
        x, info = spla.cg(system, self.weights * b, x0=start, rtol=config.ELLIPTIC_RTOL,
                          atol=0.0, maxiter=maxiter, M=preconditioner)
        if info != 0:
            residual = self.residual(x, b)
            raise NumericalError(
                f"{self.kind} conjugate gradient stopped after {maxiter} iterations "
                f"(info={info}, residual {residual:.3e})",
                residual=residual,
            )
        return x

    def _direct_factor(self):
        if "direct" not in self._factors:
            self._factors["direct"] = spla.splu((-self.matrix).tocsc())
        return self._factors["direct"]

    def implicit_factor(self, coefficient: float):
        """LU factors of (I - coefficient * L), cached per coefficient."""
        key = float(coefficient)
        if key not in self._factors:
            system = sp.identity(self.size, format="csc") - key * self.matrix.tocsc()
            self._factors[key] = spla.splu(system.tocsc())
            logger.debug("Factorized I - %.3e L for the %s operator", key, self.kind)
        return self._factors[key]


def build_operator(kind: str, grid: Grid, method: Optional[str] = None) -> EllipticOperator:
    """Assemble the operator of the given kind on `grid`."""
    Lr, weights_r = _radial_operator(kind, grid)
    z_condition = "neumann" if kind == SWIRL else DIRICHLET
    Lz = _axial_operator(grid, z_condition)
    Ir = sp.identity(grid.Nr, format="csr")
    Iz = sp.identity(grid.Nz, format="csr")
    matrix = (sp.kron(Lr, Iz) + sp.kron(Ir, Lz)).tocsr()
    weights = np.repeat(weights_r, grid.Nz) * grid.dz
    method = method or config.ELLIPTIC_METHOD
    if method == "direct" and grid.Nr * grid.Nz > config.DIRECT_SOLVE_MAX_CELLS:
        logger.warning("Direct solve requested on %d cells; falling back to cg", grid.Nr * grid.Nz)
        method = "cg"
    return EllipticOperator(kind, grid, matrix, weights, method)


def cached_operator(kind: str, grid: Grid, method: Optional[str] = None) -> EllipticOperator:
    """The operator of `kind`, shared by every grid of the same geometry."""
    return _operator_for(kind, grid.R, grid.a, grid.Nr, grid.Nz, method)


# Grid compares by identity, so the cache is keyed on its geometry.
@lru_cache(maxsize=32)
def _operator_for(kind: str, R: float, a: float, Nr: int, Nz: int, method: Optional[str]) -> EllipticOperator:
    return build_operator(kind, Grid(R, a, Nr, Nz), method)


# ========= STREAM FUNCTIONS =========

def solve_modified_stream(Gamma: ScalarField, grid: Grid, x0: Optional[np.ndarray] = None,
                          method: Optional[str] = None) -> ScalarField:
    """Solve -Delta psi1 - (2/r) psi1_r = Gamma with psi1 = 0 on S."""
    if Gamma.parity != EVEN:
        raise ContractError(f"Gamma must have even parity, got '{Gamma.parity}'")
    values, _ = cached_operator(MODIFIED, grid, method).solve(Gamma.values, x0)
    return ScalarField(values, EVEN, DIRICHLET, DIRICHLET)


def solve_stream(omega_phi: ScalarField, grid: Grid, x0: Optional[np.ndarray] = None,
                 method: Optional[str] = None) -> ScalarField:
    """Solve -Delta psi + psi/r^2 = omega_phi with psi = 0 on S."""
    if omega_phi.parity != ODD:
        raise ContractError(f"omega_phi must have odd parity, got '{omega_phi.parity}'")
    values, _ = cached_operator(STREAM, grid, method).solve(omega_phi.values, x0)
    return ScalarField(values, ODD, DIRICHLET, DIRICHLET)


# ========= ESTIMATE REPORTS =========

@dataclass
class EstimateReport:
    """Left-hand side terms of an elliptic estimate and its constant-free right-hand side."""

    name: str
    terms: dict[str, float]
    rhs: float
    note: str = ""

    @property
    def lhs(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def ratio(self) -> Optional[float]:
        """lhs / rhs, or None when the right-hand side vanishes."""
        if self.rhs > 0.0:
            return self.lhs / self.rhs
        return None

    def to_dict(self) -> dict:
        return {"name": self.name, "terms": dict(self.terms), "lhs": self.lhs, "rhs": self.rhs,
                "ratio": self.ratio, "note": self.note}


def _check_solves(psi1: ScalarField, Gamma: ScalarField, grid: Grid) -> None:
    op = cached_operator(MODIFIED, grid)
    residual = op.residual(psi1.values, Gamma.values)
    if residual > config.ELLIPTIC_CONTRACT_RTOL:
        raise ContractError(f"psi1 does not solve the modified stream problem (residual {residual:.3e})")


def _axis_line_integral(values: np.ndarray, grid: Grid) -> float:
    return float(np.sum(grid.trace_axis(values) ** 2) * grid.dz)


def _wall_line_integral(values: np.ndarray, grid: Grid) -> float:
    return float(np.sum(grid.trace_wall(values) ** 2) * grid.dz)


def _sq(values: np.ndarray, grid: Grid) -> float:
    return integrate(values**2, grid)


def h2_report(psi1: ScalarField, Gamma: ScalarField, grid: Grid) -> EstimateReport:
    """Terms of the H^2 estimate for psi1 against |Gamma|_2^2."""
    psi1 = psi1.with_bc(DIRICHLET, DIRICHLET)
    _check_solves(psi1, Gamma, grid)
    psi_r = d_dr(psi1, grid).values
    psi_z = d_dz(psi1, grid).values
    terms = {
        "psi1_rr": _sq(d2_dr2(psi1, grid).values, grid),
        "psi1_rz": _sq(d2_drdz(psi1, grid).values, grid),
        "psi1_zz": _sq(d2_dz2(psi1, grid).values, grid),
        "psi1_r_over_r": _sq(psi_r / grid.rr, grid),
        "axis_psi1_z": _axis_line_integral(psi_z, grid),
        "wall_psi1_r": _wall_line_integral(psi_r, grid),
    }
    return EstimateReport("H2", terms, _sq(Gamma.values, grid))


def h3_report(psi1: ScalarField, Gamma: ScalarField, grid: Grid) -> EstimateReport:
    """Terms of the H^3 estimates, including the weighted |psi1_rz / r|, against |Gamma_z|_2^2."""
    psi1 = psi1.with_bc(DIRICHLET, DIRICHLET)
    _check_solves(psi1, Gamma, grid)
    psi_rr = d2_dr2(psi1, grid)
    psi_rz = d2_drdz(psi1, grid)
    psi_zz = d2_dz2(psi1, grid)
    terms = {
        "psi1_rrz": _sq(d_dz(psi_rr, grid).values, grid),
        "psi1_rzz": _sq(d_dz(psi_rz, grid).values, grid),
        "psi1_zzz": _sq(d_dz(psi_zz, grid).values, grid),
        "axis_psi1_zz": _axis_line_integral(psi_zz.values, grid),
        "wall_psi1_rz": _wall_line_integral(psi_rz.values, grid),
        "psi1_rz_over_r": _sq(psi_rz.values / grid.rr, grid),
    }
    rhs = _sq(d_dz(Gamma, grid).values, grid)
    note = "" if rhs > 0.0 else "Gamma_z vanishes; ratio not applicable"
    return EstimateReport("H3", terms, rhs, note)


def weighted_report(psi1: ScalarField, Gamma: ScalarField, grid: Grid) -> EstimateReport:
    """The weighted estimate |psi1_rz / r|_2^2 against |Gamma_z|_2^2 on its own."""
    full = h3_report(psi1, Gamma, grid)
    return EstimateReport("H3_weighted", {"psi1_rz_over_r": full.terms["psi1_rz_over_r"]},
                          full.rhs, full.note)
