"""
Time marching of the closed axisymmetric system.

Only the swirl u and Gamma are evolved. Every stage then solves the modified
stream problem for psi1, rebuilds (v_r, v_z) from it, sets v_phi = u/r and
Phi = -u_z/r^2. Diffusion is implicit with cached LU factors, advection and
reaction terms are explicit:

    imex1:  (I - dt nu L) y1 = y0 + dt E(y0, t0)
    imex2:  (I - dt/2 nu L) yh = y0 + dt/2 E(y0, t0)
            (I - dt/2 nu L) y1 = (I + dt/2 nu L) y0 + dt E(yh, t0 + dt/2)

With imex1 and upwind advection the swirl update is a convex combination
followed by an M-matrix solve, so max|u| cannot grow without forcing.
"""

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Optional

import numpy as np

import config
from elliptic import MODIFIED, SWIRL, apply_stencil, cached_operator
from errors import ConfigError, NumericalError, StepSizeError
from fields import (DIRICHLET, EVEN, EXTRAPOLATE, DerivedForcing, Forcing, ScalarField, State,
                    advective_derivative, build_state, d_dr, d_dz, divergence, gradient_sq)
from grid import Grid, integrate, make_grid
from norms import Snapshot, TimeSeries

logger = logging.getLogger(__name__)

SCHEMES = ("imex1", "imex2")
ADVECTION_SCHEMES = ("upwind", "centered")

ForcingFunction = Callable[[Grid, float], Forcing]

# Column order of the time-series table
SERIES_COLUMNS = (
    "t", "v_l2", "grad_v_cum", "u_max", "gamma_l2", "phi_l2", "X", "cfl", "elliptic_residual",
    "div_l2", "vphi_max", "metric_cum", "phi_drift",
)


@dataclass(frozen=True)
class SimConfig:
    nu: float
    R: float = 1.0
    a: float = 1.0
    Nr: int = 32
    Nz: int = 32
    dt: float = 1e-3
    T: float = 0.1
    case: str = "rest"
    cfl_safety: float = config.DEFAULT_CFL_SAFETY
    record_every: int = 1
    scheme: str = "imex1"
    advection: str = "upwind"
    elliptic_method: Optional[str] = None
    track_phi: bool = False
    amplitude: Optional[float] = None
    forcing_amplitude: float = 0.0

    def validate(self) -> "SimConfig":
        if not self.nu > 0:
            raise ConfigError(f"nu must be positive, got {self.nu}", key="nu")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}", key="dt")
        if not self.T >= 0:
            raise ConfigError(f"T must be non-negative, got {self.T}", key="T")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}", key="cfl_safety")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigError(f"record_every must be a positive integer, got {self.record_every}",
                              key="record_every")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'", key="scheme")
        if self.advection not in ADVECTION_SCHEMES:
            raise ConfigError(f"advection must be one of {ADVECTION_SCHEMES}, got '{self.advection}'",
                              key="advection")
        if self.elliptic_method not in (None, "cg", "direct"):
            raise ConfigError(f"elliptic_method must be 'cg' or 'direct', got '{self.elliptic_method}'",
                              key="elliptic_method")
        make_grid(self.R, self.a, self.Nr, self.Nz)
        return self

    def grid(self) -> Grid:
        return make_grid(self.R, self.a, self.Nr, self.Nz)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StepReport:
    t_new: float
    cfl: float
    elliptic_residual: float
    wall_u: float
    lid_u_z: float
    gamma_boundary: float


# ========= RIGHT-HAND SIDES =========

def _explicit_swirl(state: State, derived: DerivedForcing, grid: Grid, advection: str) -> np.ndarray:
    return -advective_derivative(state.u, state.v, grid, advection) + derived.f0


def _explicit_gamma(state: State, derived: DerivedForcing, grid: Grid, advection: str) -> np.ndarray:
    coupling = 2.0 * (state.u.values / grid.rr**2) * state.Phi.values
    return -advective_derivative(state.Gamma, state.v, grid, advection) - coupling + derived.Fbar_phi


def _explicit_phi(state: State, phi: ScalarField, derived: DerivedForcing, grid: Grid,
                  advection: str) -> np.ndarray:
    # (omega_r d_r + omega_z d_z)(v_r / r) with v_r / r = -psi1_z, omega_r = r Phi, omega_z = u_r / r
    g = ScalarField(-d_dz(state.psi1, grid).values, EVEN, DIRICHLET, EXTRAPOLATE)
    omega_r = grid.rr * state.Phi.values
    omega_z = d_dr(state.u, grid).values / grid.rr
    stretching = omega_r * d_dr(g, grid).values + omega_z * d_dz(g, grid).values
    return -advective_derivative(phi, state.v, grid, advection) + stretching + derived.Fbar_r


def rhs_swirl(state: State, forcing: Forcing, grid: Grid, nu: float, advection: str = "upwind") -> ScalarField:
    """-v.grad u + nu (Delta u - (2/r) u_r) + f0."""
    derived = forcing.derived(grid)
    values = _explicit_swirl(state, derived, grid, advection) + nu * apply_stencil(SWIRL, state.u, grid)
    return ScalarField(values, state.u.parity)


def rhs_gamma(state: State, forcing: Forcing, grid: Grid, nu: float, advection: str = "upwind") -> ScalarField:
    """-v.grad Gamma + nu (Delta + (2/r) d_r) Gamma - 2 (v_phi / r) Phi + Fbar_phi."""
    derived = forcing.derived(grid)
    values = _explicit_gamma(state, derived, grid, advection) + nu * apply_stencil(MODIFIED, state.Gamma, grid)
    return ScalarField(values, EVEN)


def rhs_phi_diagnostic(state: State, forcing: Forcing, grid: Grid, nu: float,
                       advection: str = "upwind", phi: Optional[ScalarField] = None) -> ScalarField:
    """
    Phi_t implied by the Phi equation,
    -v.grad Phi + nu (Delta + (2/r) d_r) Phi + (omega_r d_r + omega_z d_z)(v_r/r) + Fbar_r,
    evaluated at `phi` (default: the Phi derived from u).
    """
    phi = state.Phi if phi is None else phi
    derived = forcing.derived(grid)
    values = _explicit_phi(state, phi, derived, grid, advection) + nu * apply_stencil(MODIFIED, phi, grid)
    return ScalarField(values, EVEN)


# ========= DIAGNOSTICS =========

def cfl_number(state: State, dt: float, grid: Grid) -> float:
    """dt * max(|v_r| + |v_z|) / min(dr, dz)."""
    speed = float(np.max(np.abs(state.v.v_r.values) + np.abs(state.v.v_z.values)))
    return dt * speed / min(grid.dr, grid.dz)


def instantaneous_diagnostics(state: State, grid: Grid) -> dict[str, float]:
    """Norms of one state that the run accumulates in time."""
    v = state.v
    speed_sq = v.v_r.values**2 + v.v_phi.values**2 + v.v_z.values**2
    grad_v_sq = gradient_sq(v.v_r, grid) + gradient_sq(v.v_phi, grid) + gradient_sq(v.v_z, grid)
    metric_sq = (v.v_r.values**2 + v.v_phi.values**2) / grid.rr**2
    diagnostics = {
        "v_l2": math.sqrt(integrate(speed_sq, grid)),
        "grad_v_sq": integrate(grad_v_sq, grid),
        "metric_sq": integrate(metric_sq, grid),
        "u_max": float(np.max(np.abs(state.u.values))),
        "gamma_l2": math.sqrt(integrate(state.Gamma.values**2, grid)),
        "phi_l2": math.sqrt(integrate(state.Phi.values**2, grid)),
        "grad_gamma_sq": integrate(gradient_sq(state.Gamma, grid), grid),
        "grad_phi_sq": integrate(gradient_sq(state.Phi, grid), grid),
        "div_l2": math.sqrt(integrate(divergence(v, grid).values**2, grid)),
        "vphi_max": float(np.max(np.abs(v.v_phi.values))),
        "phi_drift": math.nan,
    }
    if state.phi_shadow is not None:
        gap = math.sqrt(integrate((state.phi_shadow.values - state.Phi.values) ** 2, grid))
        scale = diagnostics["phi_l2"]
        diagnostics["phi_drift"] = gap / scale if scale > 0.0 else gap
    return diagnostics


class _Accumulator:
    """Running time integrals and suprema behind grad_v_cum, metric_cum and X."""

    def __init__(self, first: dict[str, float]):
        self.grad_v = 0.0
        self.metric = 0.0
        self.grad_phi = 0.0
        self.grad_gamma = 0.0
        self.phi_sup = first["phi_l2"]
        self.gamma_sup = first["gamma_l2"]
        self.previous = first

    def advance(self, dt: float, current: dict[str, float]) -> None:
        prev = self.previous
        self.grad_v += 0.5 * dt * (prev["grad_v_sq"] + current["grad_v_sq"])
        self.metric += 0.5 * dt * (prev["metric_sq"] + current["metric_sq"])
        self.grad_phi += 0.5 * dt * (prev["grad_phi_sq"] + current["grad_phi_sq"])
        self.grad_gamma += 0.5 * dt * (prev["grad_gamma_sq"] + current["grad_gamma_sq"])
        self.phi_sup = max(self.phi_sup, current["phi_l2"])
        self.gamma_sup = max(self.gamma_sup, current["gamma_l2"])
        self.previous = current

    def row(self, t: float, cfl: float, residual: float) -> dict[str, float]:
        current = self.previous
        x_phi = self.phi_sup + math.sqrt(self.grad_phi)
        x_gamma = self.gamma_sup + math.sqrt(self.grad_gamma)
        return {
            "t": t,
            "v_l2": current["v_l2"],
            "grad_v_cum": math.sqrt(self.grad_v),
            "u_max": current["u_max"],
            "gamma_l2": current["gamma_l2"],
            "phi_l2": current["phi_l2"],
            "X": math.sqrt(x_phi**2 + x_gamma**2),
            "cfl": cfl,
            "elliptic_residual": residual,
            "div_l2": current["div_l2"],
            "vphi_max": current["vphi_max"],
            "metric_cum": self.metric,
            "phi_drift": current["phi_drift"],
        }


# ========= STEPPER =========

class Stepper:
    """
    Advances (u, Gamma) on a fixed grid.

    nu = 0 is accepted here (pure transport); run configurations require nu > 0.
    """

    def __init__(self, grid: Grid, nu: float, forcing: Optional[ForcingFunction] = None,
                 scheme: str = "imex1", advection: str = "upwind",
                 cfl_safety: float = config.DEFAULT_CFL_SAFETY, elliptic_method: Optional[str] = None,
                 track_phi: bool = False):
        if nu < 0:
            raise ConfigError(f"nu must be non-negative, got {nu}", key="nu")
        if scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got '{scheme}'", key="scheme")
        if advection not in ADVECTION_SCHEMES:
            raise ConfigError(f"advection must be one of {ADVECTION_SCHEMES}, got '{advection}'",
                              key="advection")
        self.grid = grid
        self.nu = float(nu)
        self.forcing = forcing or (lambda g, t: Forcing.zero(g))
        self.scheme = scheme
        self.advection = advection
        self.cfl_safety = cfl_safety
        self.track_phi = track_phi
        self.swirl_op = cached_operator(SWIRL, grid, elliptic_method)
        self.modified_op = cached_operator(MODIFIED, grid, elliptic_method)

    # ----- state assembly -----

    def make_state(self, t: float, u: np.ndarray, Gamma: np.ndarray, psi1_guess: Optional[np.ndarray] = None,
                   phi_shadow: Optional[np.ndarray] = None) -> State:
        psi1, residual = self.modified_op.solve(Gamma, psi1_guess)
        return build_state(t, u, Gamma, psi1, self.grid, residual, phi_shadow)

    def initial_state(self, u0: np.ndarray, Gamma0: np.ndarray, t0: float = 0.0) -> State:
        state = self.make_state(t0, u0, Gamma0)
        if self.track_phi:
            state = replace(state, phi_shadow=state.Phi)
        return state

    # ----- stepping -----

    def _implicit(self, op, coefficient: float, rhs: np.ndarray) -> np.ndarray:
        if coefficient == 0.0:
            return rhs
        return op.implicit_factor(coefficient).solve(rhs.ravel()).reshape(self.grid.shape)

    def _explicit(self, state: State, t: float) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        derived = self.forcing(self.grid, t).derived(self.grid)
        e_u = _explicit_swirl(state, derived, self.grid, self.advection)
        e_gamma = _explicit_gamma(state, derived, self.grid, self.advection)
        e_phi = None
        if state.phi_shadow is not None:
            e_phi = _explicit_phi(state, state.phi_shadow, derived, self.grid, self.advection)
        return e_u, e_gamma, e_phi

    def check_cfl(self, state: State, dt: float, step: int = 0) -> float:
        cfl = cfl_number(state, dt, self.grid)
        if cfl > self.cfl_safety:
            raise StepSizeError(
                f"CFL number {cfl:.3g} exceeds the safety factor {self.cfl_safety} at t={state.t:.6g}",
                t=state.t, step=step)
        if self.advection == "upwind" and cfl > config.MONOTONE_CFL_LIMIT:
            logger.warning("CFL %.3f above the monotone limit %.3f for limited upwind advection",
                           cfl, config.MONOTONE_CFL_LIMIT)
        return cfl

    def step(self, state: State, dt: float, step: int = 0) -> tuple[State, StepReport]:
        """Advance `state` by dt. Raises StepSizeError on CFL violation."""
        cfl = self.check_cfl(state, dt, step)
        t0 = state.t
        nu = self.nu
        u, gamma = state.u.values, state.Gamma.values
        shadow = None if state.phi_shadow is None else state.phi_shadow.values
        e_u, e_gamma, e_phi = self._explicit(state, t0)

        if self.scheme == "imex1":
            coefficient = dt * nu
            u_new = self._implicit(self.swirl_op, coefficient, u + dt * e_u)
            gamma_new = self._implicit(self.modified_op, coefficient, gamma + dt * e_gamma)
            shadow_new = None
            if shadow is not None:
                shadow_new = self._implicit(self.modified_op, coefficient, shadow + dt * e_phi)
        else:
            half = 0.5 * dt * nu
            u_half = self._implicit(self.swirl_op, half, u + 0.5 * dt * e_u)
            gamma_half = self._implicit(self.modified_op, half, gamma + 0.5 * dt * e_gamma)
            shadow_half = None
            if shadow is not None:
                shadow_half = self._implicit(self.modified_op, half, shadow + 0.5 * dt * e_phi)
            mid = self.make_state(t0 + 0.5 * dt, u_half, gamma_half, state.psi1.values, shadow_half)
            m_u, m_gamma, m_phi = self._explicit(mid, t0 + 0.5 * dt)
            u_new = self._implicit(self.swirl_op, half, u + half * self.swirl_op.apply(u) + dt * m_u)
            gamma_new = self._implicit(self.modified_op, half,
                                       gamma + half * self.modified_op.apply(gamma) + dt * m_gamma)
            shadow_new = None
            if shadow is not None:
                shadow_new = self._implicit(self.modified_op, half,
                                            shadow + half * self.modified_op.apply(shadow) + dt * m_phi)

        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(gamma_new))):
            raise NumericalError(f"Non-finite state after the step from t={t0:.6g}", t=t0, step=step)
        new_state = self.make_state(t0 + dt, u_new, gamma_new, state.psi1.values, shadow_new)
        return new_state, self._report(new_state, cfl)

    def _report(self, state: State, cfl: float) -> StepReport:
        grid = self.grid
        u_z = d_dz(state.u, grid).values
        bottom_uz, top_uz = grid.trace_lids(u_z)
        bottom_g, top_g = grid.trace_lids(state.Gamma.values)
        gamma_boundary = max(float(np.max(np.abs(grid.trace_wall(state.Gamma.values)))),
                             float(np.max(np.abs(bottom_g))), float(np.max(np.abs(top_g))))
        return StepReport(
            t_new=state.t,
            cfl=cfl,
            elliptic_residual=state.elliptic_residual,
            wall_u=float(np.max(np.abs(grid.trace_wall(state.u.values)))),
            lid_u_z=float(max(np.max(np.abs(bottom_uz)), np.max(np.abs(top_uz)))),
            gamma_boundary=gamma_boundary,
        )


def step(state: State, forcing: Forcing, sim: SimConfig, grid: Optional[Grid] = None) -> tuple[State, StepReport]:
    """One step of `sim.dt` with forcing held at `forcing`."""
    grid = grid or sim.grid()
    stepper = Stepper(grid, sim.nu, lambda g, t: forcing, sim.scheme, sim.advection, sim.cfl_safety,
                      sim.elliptic_method, track_phi=state.phi_shadow is not None)
    return stepper.step(state, sim.dt)


# ========= RUN =========

def run(sim: SimConfig, scenario=None) -> TimeSeries:
    """
    March the scenario named by `sim.case` (or the given Scenario) to T.

    Snapshots are kept every `record_every` steps and at T. A NumericalError
    leaving the loop carries the failing time, the step index and the partial
    series in `exc.series`.
    """
    import cases

    sim.validate()
    grid = sim.grid()
    if scenario is None:
        scenario = cases.builtin_scenario(sim.case, R=sim.R, a=sim.a, nu=sim.nu, amplitude=sim.amplitude,
                                          forcing_amplitude=sim.forcing_amplitude)
    stepper = Stepper(grid, sim.nu, scenario.forcing, sim.scheme, sim.advection, sim.cfl_safety,
                      sim.elliptic_method, sim.track_phi)
    u0, gamma0 = scenario.initial(grid)
    state = stepper.initial_state(u0, gamma0)

    series = TimeSeries(grid, sim.nu, metadata={
        "scenario": scenario.name,
        "scheme": sim.scheme,
        "advection": sim.advection,
        "config": sim.to_dict(),
    })
    first = instantaneous_diagnostics(state, grid)
    accumulator = _Accumulator(first)
    initial_cfl = cfl_number(state, sim.dt, grid)
    series.append(Snapshot(state, scenario.forcing(grid, 0.0),
                           accumulator.row(0.0, initial_cfl, state.elliptic_residual)))

    n_steps = 0 if sim.T == 0 else int(math.ceil(sim.T / sim.dt - 1e-9))
    logger.info("Running %s on %dx%d, %s/%s, %d steps to T=%g", scenario.name, grid.Nr, grid.Nz,
                sim.scheme, sim.advection, n_steps, sim.T)
    for n in range(1, n_steps + 1):
        t_new = sim.T if n == n_steps else n * sim.dt
        t_old = state.t
        try:
            state, report = stepper.step(state, t_new - t_old, step=n)
        except NumericalError as exc:
            exc.t = state.t if exc.t is None else exc.t
            exc.step = n if exc.step is None else exc.step
            exc.series = series
            logger.error("Run failed at step %d (t=%.6g): %s", exc.step, exc.t, exc)
            raise
        accumulator.advance(t_new - t_old, instantaneous_diagnostics(state, grid))
        logger.debug("step %d t=%.6g cfl=%.3g residual=%.2e", n, t_new, report.cfl, report.elliptic_residual)
        if n % sim.record_every == 0 or n == n_steps:
            series.append(Snapshot(state, scenario.forcing(grid, state.t),
                                   accumulator.row(state.t, report.cfl, report.elliptic_residual)))

    series.metadata["steps"] = n_steps
    logger.info("Finished %s at t=%g with %d snapshots", scenario.name, series.horizon, len(series))
    return series
