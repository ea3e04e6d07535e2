"""
Scenario library: initial data, forcing and exact solutions.

Every builder is an analytic function of (r, z[, t]) sampled on a grid, so
the manufactured forcing never depends on the discrete operators it is used
to test. Radial profiles of the manufactured solution are numpy polynomials
in x = r^2, which keeps every field regular at the axis.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

import config
from errors import ConfigError, ContractError
from fields import EVEN, ODD, Forcing, ScalarField
from grid import Grid, make_grid

logger = logging.getLogger(__name__)

ProfileFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
ForcingBuilder = Callable[[Grid, float], Forcing]
ExactSolution = Callable[[Grid, float], tuple[np.ndarray, np.ndarray]]

COMPATIBILITY_TOL = 1e-8
SMALL_DATA_REFERENCE_CELLS = 32


@dataclass(eq=False)
class Scenario:
    """Initial (u, Gamma), body force and optional exact solution on the cylinder (R, a)."""

    name: str
    R: float
    a: float
    nu: float
    initial_u: ProfileFunction
    initial_gamma: ProfileFunction
    forcing_builder: Optional[ForcingBuilder] = None
    exact: Optional[ExactSolution] = None
    metadata: dict = field(default_factory=dict)
    compatible: bool = field(init=False, default=False)

    def __post_init__(self):
        self.compatible = compatibility_check(self)["compatible"]

    def _check_grid(self, grid: Grid) -> None:
        if not (math.isclose(grid.R, self.R) and math.isclose(grid.a, self.a)):
            raise ContractError(
                f"Scenario '{self.name}' is built for R={self.R}, a={self.a}, grid has R={grid.R}, a={grid.a}")

    def initial(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        self._check_grid(grid)
        return self.initial_u(grid.rr, grid.zz), self.initial_gamma(grid.rr, grid.zz)

    def forcing(self, grid: Grid, t: float) -> Forcing:
        if self.forcing_builder is None:
            return Forcing.zero(grid)
        return self.forcing_builder(grid, t)

    def is_forced(self) -> bool:
        return self.forcing_builder is not None


def compatibility_check(scenario: Scenario, samples: int = 65) -> dict:
    """
    Boundary residuals of the initial data: u and Gamma at r=R, Gamma and u_z at z=+-a.
    """
    R, a = scenario.R, scenario.a
    z = np.linspace(-a, a, samples)
    r = np.linspace(0.0, R, samples)
    wall_r = np.full_like(z, R)
    lid = np.full_like(r, a)
    step = 1e-6 * a

    def u_z(rs, zs):
        return (scenario.initial_u(rs, zs + step) - scenario.initial_u(rs, zs - step)) / (2.0 * step)

    residuals = {
        "u_wall": float(np.max(np.abs(scenario.initial_u(wall_r, z)))),
        "gamma_wall": float(np.max(np.abs(scenario.initial_gamma(wall_r, z)))),
        "gamma_lids": float(max(np.max(np.abs(scenario.initial_gamma(r, lid))),
                                np.max(np.abs(scenario.initial_gamma(r, -lid))))),
        "u_z_lids": float(max(np.max(np.abs(u_z(r, lid))), np.max(np.abs(u_z(r, -lid))))),
    }
    rr, zz = np.meshgrid(r, z, indexing="ij")
    scale = max(1.0, float(np.max(np.abs(scenario.initial_u(rr, zz)))),
                float(np.max(np.abs(scenario.initial_gamma(rr, zz)))))
    tolerances = {name: COMPATIBILITY_TOL * scale for name in residuals}
    tolerances["u_z_lids"] = 1e-6 * scale / a
    residuals["compatible"] = all(residuals[name] <= tolerances[name] for name in tolerances)
    return residuals


# ========= BUILDERS =========

def _zeros(r: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.zeros(np.broadcast(r, z).shape)


def _azimuthal_forcing(R: float, a: float, amplitude: float) -> ForcingBuilder:
    """Steady f_phi = F r (R^2 - r^2) / R^3 cos^2(pi z / 2a), so f0 vanishes at r=R."""
    k = math.pi / (2.0 * a)

    def build(grid: Grid, t: float) -> Forcing:
        f_phi = amplitude * grid.rr * (R**2 - grid.rr**2) / R**3 * np.cos(k * grid.zz) ** 2
        zero = np.zeros(grid.shape)
        return Forcing(ScalarField(zero, ODD), ScalarField(f_phi, ODD), ScalarField(zero, EVEN),
                       F_phi_exact=zero)

    return build


def _rest(R: float, a: float, nu: float, **_) -> Scenario:
    return Scenario("rest", R, a, nu, _zeros, _zeros,
                    exact=lambda grid, t: (np.zeros(grid.shape), np.zeros(grid.shape)))


def _swirl_profile(R: float, a: float, amplitude: float) -> ProfileFunction:
    k = math.pi / (2.0 * a)

    def u0(r, z):
        return amplitude * 16.0 * r**2 * (R - r) ** 2 / R**4 * np.cos(k * z) ** 2

    return u0


def _swirl_decay(R: float, a: float, nu: float, amplitude: Optional[float] = None,
                 forcing_amplitude: float = 0.0, **_) -> Scenario:
    amplitude = 1.0 if amplitude is None else amplitude
    forcing = _azimuthal_forcing(R, a, forcing_amplitude) if forcing_amplitude else None
    return Scenario("swirl_decay", R, a, nu, _swirl_profile(R, a, amplitude), _zeros, forcing,
                    metadata={"amplitude": amplitude, "forcing_amplitude": forcing_amplitude})


def _vortex_ring(R: float, a: float, nu: float, amplitude: Optional[float] = None,
                 forcing_amplitude: float = 0.0, **_) -> Scenario:
    amplitude = 2.0 if amplitude is None else amplitude
    sigma = 0.4 * min(R, a)

    def gamma0(r, z):
        rho_sq = (r - 0.5 * R) ** 2 + z**2
        return amplitude * np.clip(1.0 - rho_sq / sigma**2, 0.0, None) ** 3

    forcing = _azimuthal_forcing(R, a, forcing_amplitude) if forcing_amplitude else None
    return Scenario("vortex_ring", R, a, nu, _zeros, gamma0, forcing,
                    metadata={"amplitude": amplitude, "sigma": sigma, "forcing_amplitude": forcing_amplitude})


# ========= MANUFACTURED SOLUTION =========

class _ManufacturedProfiles:
    """
    psi1 = A e^-t P(x) cos(kz),  Gamma = e^-t g(x) cos(kz),  u = A e^-t U(x) cos(2kz)
    with x = r^2, P = (R^2 - x)^3 / R^6, U = x (R^2 - x) / R^4 and k = pi / 2a.
    """

    def __init__(self, R: float, a: float, nu: float, amplitude: float):
        self.nu = nu
        self.k = k = math.pi / (2.0 * a)
        x = Polynomial([0.0, 1.0])
        s = Polynomial([R**2, -1.0])
        self.P = amplitude * s**3 / R**6
        # Gamma = -(Delta + (2/r) d_r) psi1; in x the radial part is 8 P' + 4 x P''
        self.g = -(8.0 * self.P.deriv() + 4.0 * x * self.P.deriv(2)) + k**2 * self.P
        self.U = amplitude * x * s / R**4
        self.U_over_x = amplitude * s / R**4
        self.Lg = 8.0 * self.g.deriv() + 4.0 * x * self.g.deriv(2)
        self.LU = 4.0 * x * self.U.deriv(2)
        self._x = x

    def u(self, r, z, t):
        return math.exp(-t) * self.U(r**2) * np.cos(2.0 * self.k * z)

    def gamma(self, r, z, t):
        return math.exp(-t) * self.g(r**2) * np.cos(self.k * z)

    def _velocity(self, r, z, decay):
        x = r**2
        v_r = r * self.k * self.P(x) * decay * np.sin(self.k * z)
        v_z = (2.0 * x * self.P.deriv()(x) + 2.0 * self.P(x)) * decay * np.cos(self.k * z)
        return v_r, v_z

    def swirl_residual(self, r, z, t):
        """u_t + v.grad u - nu (u_rr - u_r/r + u_zz)."""
        k, x, decay = self.k, r**2, math.exp(-t)
        c2, s2 = np.cos(2.0 * k * z), np.sin(2.0 * k * z)
        u = decay * self.U(x) * c2
        u_r = decay * 2.0 * r * self.U.deriv()(x) * c2
        u_z = -2.0 * k * decay * self.U(x) * s2
        v_r, v_z = self._velocity(r, z, decay)
        diffusion = self.nu * decay * c2 * (self.LU(x) - 4.0 * k**2 * self.U(x))
        return -u + v_r * u_r + v_z * u_z - diffusion

    def _gamma_coefficients(self, x):
        k, g, P = self.k, self.g, self.P
        c1 = -g(x) - self.nu * (self.Lg(x) - k**2 * g(x))
        c2 = k * (x * P(x) * g.deriv()(x) - (x * P.deriv()(x) + P(x)) * g(x))
        c4 = 2.0 * k * self.U_over_x(x) ** 2
        return c1, c2, c4

    def gamma_residual(self, r, z, t):
        """Gamma_t + v.grad Gamma - nu (Delta + (2/r) d_r) Gamma + 2 (v_phi / r) Phi."""
        k, decay = self.k, math.exp(-t)
        c1, c2, c4 = self._gamma_coefficients(r**2)
        return (decay * c1 * np.cos(k * z) + decay**2 * c2 * np.sin(2.0 * k * z)
                + decay**2 * c4 * np.sin(4.0 * k * z))

    def radial_force(self, r, z, t):
        """f_r = r * (z-antiderivative of the Gamma residual), so f_r,z = F_phi with f_z = 0."""
        k, decay = self.k, math.exp(-t)
        c1, c2, c4 = self._gamma_coefficients(r**2)
        antiderivative = (decay * c1 * np.sin(k * z) / k
                          - decay**2 * c2 * np.cos(2.0 * k * z) / (2.0 * k)
                          - decay**2 * c4 * np.cos(4.0 * k * z) / (4.0 * k))
        return r * antiderivative


def _manufactured_full(R: float, a: float, nu: float, amplitude: Optional[float] = None, **_) -> Scenario:
    amplitude = 1.0 if amplitude is None else amplitude
    profiles = _ManufacturedProfiles(R, a, nu, amplitude)

    def forcing(grid: Grid, t: float) -> Forcing:
        r, z = grid.rr, grid.zz
        f_r = profiles.radial_force(r, z, t)
        f_phi = profiles.swirl_residual(r, z, t) / r
        F_phi = r * profiles.gamma_residual(r, z, t)
        return Forcing(ScalarField(f_r, ODD), ScalarField(f_phi, ODD), ScalarField(np.zeros(grid.shape), EVEN),
                       F_phi_exact=F_phi)

    def exact(grid: Grid, t: float) -> tuple[np.ndarray, np.ndarray]:
        return profiles.u(grid.rr, grid.zz, t), profiles.gamma(grid.rr, grid.zz, t)

    return Scenario("manufactured_full", R, a, nu,
                    lambda r, z: profiles.u(r, z, 0.0), lambda r, z: profiles.gamma(r, z, 0.0),
                    forcing, exact, metadata={"amplitude": amplitude})


# ========= SMALL DATA =========

def _small_data_measure(R: float, a: float, nu: float, amplitude: float, grid: Grid) -> tuple[float, float]:
    """(G2, kappa) of the unforced swirl profile with the given amplitude."""
    import certificates
    from fields import build_state

    u0 = _swirl_profile(R, a, amplitude)(grid.rr, grid.zz)
    zero = np.zeros(grid.shape)
    state = build_state(0.0, u0, zero, zero, grid)
    constants = certificates.data_constants(state, [Forcing.zero(grid)], np.array([0.0]), nu, grid)
    return constants.G2, constants.kappa


def _small_data(R: float, a: float, nu: float, margin: Optional[float] = None, **_) -> Scenario:
    margin = config.SMALL_DATA_MARGIN if margin is None else margin
    grid = make_grid(R, a, SMALL_DATA_REFERENCE_CELLS, SMALL_DATA_REFERENCE_CELLS)

    def excess(amplitude: float) -> float:
        G2, kappa = _small_data_measure(R, a, nu, amplitude, grid)
        return G2 - margin / (kappa + 1.0) ** 1.5

    upper = 1.0
    while excess(upper) < 0.0:
        upper *= 2.0
    amplitude = brentq(excess, 0.0, upper, xtol=1e-14, rtol=1e-12)
    G2, kappa = _small_data_measure(R, a, nu, amplitude, grid)
    threshold = 1.0 / (kappa + 1.0) ** 1.5
    if G2 > threshold:
        raise ContractError(f"small_data amplitude {amplitude:.6g} gives G2={G2:.6g} above {threshold:.6g}")
    logger.info("small_data amplitude %.6g: G2=%.4g, kappa=%.4g, threshold %.4g", amplitude, G2, kappa, threshold)
    base = _swirl_decay(R, a, nu, amplitude=amplitude)
    return replace(base, name="small_data",
                   metadata={"amplitude": amplitude, "G2": G2, "kappa": kappa, "threshold": threshold,
                             "margin": margin})


# ========= REGISTRY =========

SCENARIOS = {
    "rest": _rest,
    "swirl_decay": _swirl_decay,
    "vortex_ring": _vortex_ring,
    "manufactured_full": _manufactured_full,
    "small_data": _small_data,
}


def builtin_scenario(name: str, R: float = 1.0, a: float = 1.0, nu: float = 1.0,
                     amplitude: Optional[float] = None, forcing_amplitude: float = 0.0) -> Scenario:
    """
    Build a named scenario on the cylinder (R, a).

    Raises:
        ConfigError: unknown name (the message lists the available scenarios)
    """
    try:
        builder = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"Unknown scenario '{name}'; available: {', '.join(sorted(SCENARIOS))}",
                          key="name") from None
    return builder(R=R, a=a, nu=nu, amplitude=amplitude, forcing_amplitude=forcing_amplitude)


# ========= VERIFICATION =========

def _interior(values: np.ndarray) -> np.ndarray:
    return values[:-1, 1:-1]


def mms_residual(scenario: Scenario, grid: Grid, t: float = 0.0) -> float:
    """
    Relative interior L2 size of (exact time derivative - discrete right-hand side)
    for the u and Gamma equations, evaluated on the exact fields.
    """
    import dynamics
    from elliptic import solve_modified_stream
    from fields import build_state

    if scenario.exact is None:
        raise ContractError(f"Scenario '{scenario.name}' has no exact solution")
    u, gamma = scenario.exact(grid, t)
    psi1 = solve_modified_stream(ScalarField(gamma, EVEN), grid)
    state = build_state(t, u, gamma, psi1.values, grid)
    forcing = scenario.forcing(grid, t)
    step = 1e-6
    u_next, gamma_next = scenario.exact(grid, t + step)
    u_prev, gamma_prev = scenario.exact(grid, max(t - step, 0.0))
    span = (t + step) - max(t - step, 0.0)

    worst = 0.0
    for exact_now, later, earlier, rhs in (
        (u, u_next, u_prev, dynamics.rhs_swirl(state, forcing, grid, scenario.nu, "centered")),
        (gamma, gamma_next, gamma_prev, dynamics.rhs_gamma(state, forcing, grid, scenario.nu, "centered")),
    ):
        time_derivative = (later - earlier) / span
        weights = _interior(grid.volume_weights)
        gap = math.sqrt(float(np.sum(_interior(time_derivative - rhs.values) ** 2 * weights)))
        scale = math.sqrt(float(np.sum(_interior(time_derivative) ** 2 * weights)))
        worst = max(worst, gap / scale if scale > 0.0 else gap)
    return worst


@dataclass
class ConvergenceReport:
    scenario: str
    resolutions: list[int]
    h: list[float]
    errors_u: list[float]
    errors_gamma: list[float]
    order_u: Optional[float]
    order_gamma: Optional[float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _fitted_order(h: Sequence[float], errors: Sequence[float]) -> Optional[float]:
    if min(errors) <= 0.0:
        return None
    slope, _ = np.polyfit(np.log(h), np.log(errors), 1)
    return float(slope)


def convergence_study(scenario: Scenario, resolutions: Sequence[int], sim) -> ConvergenceReport:
    """
    Final-time L2 errors against the exact solution with Nr = Nz = N and dt
    proportional to h, using imex2 with centered advection.
    """
    import dynamics
    from norms import lp_norm

    if scenario.exact is None:
        raise ContractError(f"Scenario '{scenario.name}' has no exact solution")
    if len(resolutions) < 3:
        raise ContractError("A convergence study needs at least 3 resolutions")
    base = resolutions[0]
    h, errors_u, errors_gamma = [], [], []
    for n in resolutions:
        level = replace(sim, R=scenario.R, a=scenario.a, Nr=n, Nz=n, dt=sim.dt * base / n,
                        scheme="imex2", advection="centered", nu=scenario.nu, record_every=10**9)
        series = dynamics.run(level, scenario)
        grid = series.grid
        final = series.final.state
        u_exact, gamma_exact = scenario.exact(grid, final.t)
        h.append(grid.h)
        errors_u.append(lp_norm(final.u.values - u_exact, 2.0, grid))
        errors_gamma.append(lp_norm(final.Gamma.values - gamma_exact, 2.0, grid))
        logger.info("N=%d: |e_u|=%.3e |e_Gamma|=%.3e", n, errors_u[-1], errors_gamma[-1])
    return ConvergenceReport(scenario.name, list(resolutions), h, errors_u, errors_gamma,
                             _fitted_order(h, errors_u), _fitted_order(h, errors_gamma))
