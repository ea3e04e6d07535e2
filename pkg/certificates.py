"""
A-priori estimate ledgers over a completed run.

Inequalities with explicit constants are checked strictly (pass / fail at a
stated tolerance). Inequalities that only hold up to an unspecified constant
are "tracked": both sides are evaluated with every such constant set to 1 and
the ratio is recorded, so that its stability can be judged across
resolutions.

Usage:
    report = certificate_report(series, CertificateOptions())
    report.strict_failures()
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

import config
from errors import ContractError, DomainError, SimulationError, UndefinedRatioError
from fields import (DIRICHLET, EXTRAPOLATE, ODD, ODD2, Forcing, ScalarField, State, d_dr, d_dz,
                    gradient_sq, omega_z_from_swirl)
from grid import Grid, integrate
from norms import (INF, NormSpec, Snapshot, TimeSeries, hardy_ratio, lambda_s, lp_norm, mixed_norm,
                   trapezoid_weights, v_norm)

logger = logging.getLogger(__name__)

STRICT = "strict"
TRACKED = "tracked"

PASS = "pass"
FAIL = "fail"
SKIPPED = "skipped"
ERROR = "error"

LARGE_RATIO = "large_ratio"
SMALL_RATIO = "small_ratio"

# Slack for strict comparisons whose both sides are exactly zero up to round-off
ROUND_OFF = 1e-14

# Upper bound on snapshots fed to the elliptic estimate ledgers
ELLIPTIC_SAMPLES = 50


# ========= OPTIONS =========

@dataclass(frozen=True)
class CertificateOptions:
    eps0: float = config.DEFAULT_EPS0
    delta: float = config.DEFAULT_DELTA
    s_values: tuple[float, ...] = config.DEFAULT_S_VALUES
    c0: float = config.DEFAULT_C0
    constant_c: float = config.DEFAULT_CONSTANT_C
    interaction_d: float = config.DEFAULT_INTERACTION_D

    def validate(self) -> "CertificateOptions":
        if not 0.0 < self.eps0 < 1.0:
            raise DomainError(f"eps0 must lie in (0, 1), got {self.eps0}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.s_values or any(not s > 1.0 for s in self.s_values):
            raise DomainError(f"s_values must be a non-empty list of values > 1, got {self.s_values}")
        if not self.c0 > 0.0:
            raise DomainError(f"c0 must be positive, got {self.c0}")
        if not self.constant_c > 0.0:
            raise DomainError(f"constant_c must be positive, got {self.constant_c}")
        if not 0.0 <= self.interaction_d <= 1.0:
            raise DomainError(f"interaction_d must lie in [0, 1], got {self.interaction_d}")
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data["s_values"] = list(self.s_values)
        return data


# ========= DATA CONSTANTS =========

@dataclass(frozen=True)
class DataConstants:
    """
    Constants built from the initial data and the forcing history.

    D1 and D4 are the squared forms that the energy and swirl-gradient
    estimates actually prove; D1_notation and D4_notation are the linear
    forms, reported alongside.
    """

    nu: float
    D1: float
    D1_notation: float
    D2: float
    Dstar: float
    D3: float
    D4: float
    D4_notation: float
    D5: float
    D6: float
    D7: float
    D8: float
    G: float
    G1: float
    G2: float
    kappa: float
    constant_c: float
    inputs: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _weighted(values: Sequence[float], weights: np.ndarray) -> float:
    return float(np.dot(weights, np.asarray(values, dtype=float)))


def _forcing_norms(forcings: Sequence[Forcing], times: np.ndarray, grid: Grid) -> dict[str, float]:
    w = trapezoid_weights(times)
    per_time: dict[str, list[float]] = {name: [] for name in (
        "f_l2", "f0_inf", "f0_l2", "Fbar_r_65", "Fbar_phi_65", "F_r_65", "F_z_65", "F1_65",
        "r_fphi_4", "fphi_over_r_inf", "fphi_inf", "fphi_wall_l3",
    )}
    for forcing in forcings:
        d = forcing.derived(grid)
        per_time["f_l2"].append(math.sqrt(integrate(forcing.magnitude_sq(), grid)))
        per_time["f0_inf"].append(lp_norm(d.f0, INF, grid))
        per_time["f0_l2"].append(lp_norm(d.f0, 2.0, grid))
        per_time["Fbar_r_65"].append(lp_norm(d.Fbar_r, 1.2, grid))
        per_time["Fbar_phi_65"].append(lp_norm(d.Fbar_phi, 1.2, grid))
        per_time["F_r_65"].append(lp_norm(d.F_r, 1.2, grid))
        per_time["F_z_65"].append(lp_norm(d.F_z, 1.2, grid))
        per_time["F1_65"].append(lp_norm(d.F1, 1.2, grid))
        per_time["r_fphi_4"].append(integrate((grid.rr * forcing.f_phi.values) ** 4, grid))
        per_time["fphi_over_r_inf"].append(lp_norm(d.f1, INF, grid))
        per_time["fphi_inf"].append(lp_norm(forcing.f_phi, INF, grid))
        wall = grid.integrate_wall(np.abs(grid.trace_wall(forcing.f_phi.values)) ** 3)
        per_time["fphi_wall_l3"].append(wall ** (1.0 / 3.0))

    def l2_in_time(name: str) -> float:
        return math.sqrt(_weighted(np.square(per_time[name]), w))

    return {
        "f_21": _weighted(per_time["f_l2"], w),
        "f0_inf1": _weighted(per_time["f0_inf"], w),
        "f0_sup2": max(per_time["f0_l2"]),
        "f0_22_sq": _weighted(np.square(per_time["f0_l2"]), w),
        "Fbar_r_652": l2_in_time("Fbar_r_65"),
        "Fbar_phi_652": l2_in_time("Fbar_phi_65"),
        "F_r_652": l2_in_time("F_r_65"),
        "F_z_652": l2_in_time("F_z_65"),
        "F1_652": l2_in_time("F1_65"),
        "r_fphi_44": _weighted(per_time["r_fphi_4"], w),
        "fphi_over_r_inf1": _weighted(per_time["fphi_over_r_inf"], w),
        "fphi_inf1": _weighted(per_time["fphi_inf"], w),
        "fphi_wall_l2l3": l2_in_time("fphi_wall_l3"),
    }


def _initial_norms(initial: State, grid: Grid) -> dict[str, float]:
    v = initial.v
    u = initial.u
    vphi = v.v_phi.values
    return {
        "v0_l2": math.sqrt(integrate(v.v_r.values**2 + vphi**2 + v.v_z.values**2, grid)),
        "u0_inf": lp_norm(u, INF, grid),
        "Phi0_l2": lp_norm(initial.Phi, 2.0, grid),
        "Gamma0_l2": lp_norm(initial.Gamma, 2.0, grid),
        "u_z0_l2": lp_norm(d_dz(u, grid), 2.0, grid),
        "u_r0_l2": lp_norm(d_dr(u, grid), 2.0, grid),
        "omega_r0_l2": lp_norm(grid.rr * initial.Phi.values, 2.0, grid),
        "omega_z0_l2": lp_norm(omega_z_from_swirl(u, grid), 2.0, grid),
        "vphi0_inf": lp_norm(vphi, INF, grid),
        "vphi0_sq_over_r_l2": lp_norm(vphi**2 / grid.rr, 2.0, grid),
    }


def data_constants(initial: State, forcings: Sequence[Forcing], times: Sequence[float], nu: float,
                   grid: Grid, constant_c: float = config.DEFAULT_CONSTANT_C) -> DataConstants:
    """
    Evaluate D1..D8, Dstar, G, G1, G2 and kappa = c (D1^2 + D8^2).

    Args:
        initial: State at t = 0
        forcings: Forcing at each of `times`
        times: Increasing times starting at 0; time norms use trapezoid weights on them
        nu: Viscosity
        grid: Grid of the fields
        constant_c: The generic constant c of the small-data argument
    """
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    times = np.asarray(times, dtype=float)
    if len(forcings) != times.size:
        raise ContractError(f"{len(forcings)} forcings given for {times.size} times")
    f = _forcing_norms(forcings, times, grid)
    d = _initial_norms(initial, grid)

    D1_sq = 3.0 * f["f_21"] ** 2 + 2.0 * d["v0_l2"] ** 2
    D1 = math.sqrt(D1_sq)
    D1_notation = 3.0 * f["f_21"] + 2.0 * d["v0_l2"]
    D2 = f["f0_inf1"] + d["u0_inf"]
    D3 = ((f["Fbar_r_652"] + f["Fbar_phi_652"]) / math.sqrt(2.0 * nu)
          + d["Phi0_l2"] + d["Gamma0_l2"])
    D4 = math.sqrt((D1_sq + D2**2 + d["u_z0_l2"] ** 2 + f["f0_sup2"] ** 2) / nu)
    D4_notation = (D1 + D2 + d["u_z0_l2"] + f["f0_sup2"]) / math.sqrt(nu)
    D5 = math.sqrt(D1_sq * (1.0 + D2) + D1_sq * D2**2 + d["u_r0_l2"] ** 2 + f["f0_22_sq"])
    D6 = math.sqrt((D4 + D5) * f["fphi_wall_l2l3"] + (f["F_r_652"] ** 2 + f["F_z_652"] ** 2) / nu
                   + d["omega_r0_l2"] ** 2 + d["omega_z0_l2"] ** 2)
    D7 = math.sqrt(2.0 * D2 * f["fphi_over_r_inf1"]) + d["vphi0_inf"]
    D8 = math.sqrt(max(nu / 4.0, nu**2 / 8.0, 27.0 / (4.0 * nu**3), 0.25))
    G = math.sqrt(f["F1_652"] ** 2 + d["Gamma0_l2"] ** 2 + f["r_fphi_44"] + d["vphi0_sq_over_r_l2"] ** 2)
    G1 = f["fphi_inf1"] + d["vphi0_inf"]
    return DataConstants(
        nu=nu, D1=D1, D1_notation=D1_notation, D2=D2, Dstar=min(1.0, D2), D3=D3, D4=D4,
        D4_notation=D4_notation, D5=D5, D6=D6, D7=D7, D8=D8, G=G, G1=G1, G2=constant_c * G**3 + G1,
        kappa=constant_c * (D1_sq + D8**2), constant_c=constant_c, inputs={**f, **d},
    )


def series_constants(series: TimeSeries, constant_c: float = config.DEFAULT_CONSTANT_C) -> DataConstants:
    series.require_nonempty()
    return data_constants(series.initial.state, [s.forcing for s in series.snapshots], series.times,
                          series.nu, series.grid, constant_c)


# ========= LEDGER ENTRIES =========

@dataclass
class LedgerEntry:
    name: str
    lhs: Optional[float]
    rhs_c_free: Optional[float]
    ratio: Optional[float]
    mode: str
    status: str
    tol: Optional[float] = None
    hypothesis: dict[str, Any] = field(default_factory=dict)
    note: str = ""

    @property
    def failed(self) -> bool:
        return self.mode == STRICT and self.status == FAIL

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(lhs: float, rhs: float) -> Optional[float]:
    if rhs > 0.0:
        return lhs / rhs
    return None if lhs == 0.0 else math.inf


def strict_entry(name: str, lhs: float, rhs: float, tol: float, relative: bool = True,
                 **extra) -> LedgerEntry:
    """lhs <= rhs (1 + tol) when relative, lhs <= rhs + tol max(1, rhs) otherwise."""
    allowance = rhs * tol if relative else tol * max(1.0, rhs)
    status = PASS if lhs <= rhs + allowance + ROUND_OFF else FAIL
    if status == FAIL:
        logger.warning("Strict entry %s failed: %.6g > %.6g", name, lhs, rhs)
    return LedgerEntry(name, lhs, rhs, _ratio(lhs, rhs), STRICT, status, tol, **extra)


def tracked_entry(name: str, lhs: float, rhs: float, **extra) -> LedgerEntry:
    """A ratio-tracked entry; 0/0 is skipped rather than recorded."""
    if lhs == 0.0 and rhs == 0.0:
        note = extra.pop("note", "")
        return LedgerEntry(name, lhs, rhs, None, TRACKED, SKIPPED,
                           note=(note + "; " if note else "") + "both sides vanish (0/0)", **extra)
    return LedgerEntry(name, lhs, rhs, _ratio(lhs, rhs), TRACKED, TRACKED, **extra)


def skipped_entry(name: str, mode: str, reason: str, **extra) -> LedgerEntry:
    return LedgerEntry(name, None, None, None, mode, SKIPPED, note=reason, **extra)


# ========= PER-SNAPSHOT HELPERS =========

def _diagnostic_or(series: TimeSeries, name: str, compute: Callable[[Snapshot], float]) -> np.ndarray:
    """A recorded diagnostic, or its recomputation on every snapshot when missing."""
    if all(name in s.diagnostics for s in series.snapshots):
        return series.diagnostic(name)
    return np.array([compute(s) for s in series.snapshots], dtype=float)


def _running_integral(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Trapezoid integrals over (0, t_k) for every k."""
    increments = 0.5 * np.diff(times) * (values[1:] + values[:-1])
    return np.concatenate(([0.0], np.cumsum(increments)))


def _vphi_sup(series: TimeSeries) -> float:
    return float(max(_diagnostic_or(series, "vphi_max",
                                    lambda s: lp_norm(s.state.v.v_phi, INF, series.grid))))


def _sampled(series: TimeSeries, limit: int = ELLIPTIC_SAMPLES) -> list[Snapshot]:
    n = len(series)
    if n <= limit:
        return list(series.snapshots)
    indices = np.unique(np.linspace(0, n - 1, limit).round().astype(int))
    return [series.snapshots[i] for i in indices]


# ========= ENERGY AND MAXIMUM PRINCIPLE =========

def energy_budget(series: TimeSeries, constants: Optional[DataConstants] = None) -> list[dict[str, float]]:
    """Per-snapshot terms of the energy inequality."""
    constants = constants or series_constants(series)
    nu = series.nu
    v_l2 = series.diagnostic("v_l2")
    dissipation = nu * series.diagnostic("grad_v_cum") ** 2
    metric = nu * series.diagnostic("metric_cum")
    rows = []
    for t, kinetic, diss, met in zip(series.times, v_l2**2, dissipation, metric):
        rows.append({"t": float(t), "kinetic": float(kinetic), "dissipation": float(diss),
                     "metric": float(met), "lhs": float(kinetic + diss + met), "rhs": constants.D1**2})
    return rows


def energy_ledger(series: TimeSeries, constants: Optional[DataConstants] = None) -> LedgerEntry:
    """
    max_t (|v|^2 + nu |grad v|^2_{2,Omega^t} + nu |(v_r, v_phi)/r|^2_{2,Omega^t})
    against 3 |f|_{2,1,Omega^t}^2 + 2 |v(0)|_2^2.
    """
    series.require_nonempty()
    constants = constants or series_constants(series)
    rows = energy_budget(series, constants)
    lhs = max(row["lhs"] for row in rows)
    return strict_entry("energy", lhs, constants.D1**2, config.ENERGY_TOL,
                        hypothesis={"D1_notation": constants.D1_notation})


def _steady_swirl_forcing(series: TimeSeries) -> bool:
    peaks = np.array([float(np.max(np.abs(s.forcing.derived(series.grid).f0))) for s in series.snapshots])
    return bool(np.ptp(peaks) <= 1e-12 * max(1.0, float(peaks.max())))


def max_principle_ledger(series: TimeSeries, constants: Optional[DataConstants] = None) -> LedgerEntry:
    """
    max_t |u|_inf against |f0|_{inf,1,Omega^t} + |u(0)|_inf.

    Strict with upwind advection: at the monotone tolerance for imex1 under a
    time-independent f0, at the looser tolerance otherwise. Tracked with
    centered advection.
    """
    series.require_nonempty()
    constants = constants or series_constants(series)
    lhs = float(max(_diagnostic_or(series, "u_max", lambda s: lp_norm(s.state.u, INF, series.grid))))
    rhs = constants.D2
    advection = series.metadata.get("advection", "upwind")
    scheme = series.metadata.get("scheme", "imex1")
    hypothesis = {"advection": advection, "scheme": scheme}
    if advection != "upwind":
        return tracked_entry("max_principle", lhs, rhs, hypothesis=hypothesis,
                             note="centered advection is not monotone")
    monotone = scheme == "imex1" and _steady_swirl_forcing(series)
    tol = config.MAX_PRINCIPLE_TOL_MONOTONE if monotone else config.MAX_PRINCIPLE_TOL
    hypothesis["monotone"] = monotone
    return strict_entry("max_principle", lhs, rhs, tol, relative=False, hypothesis=hypothesis)


# ========= STREAM FUNCTION ENERGY =========

def stream_energy_ledgers(series: TimeSeries, constants: Optional[DataConstants] = None) -> list[LedgerEntry]:
    """
    Tracked: max_t (||psi||_1^2 + |psi1|^2) and the time integral of
    |psi_z|^2 + |grad psi_z|^2 + |psi1_z|^2, both against D1^2, with psi = r psi1.
    """
    series.require_nonempty()
    constants = constants or series_constants(series)
    grid = series.grid
    level, rate = [], []
    for snap in series.snapshots:
        psi1 = snap.state.psi1
        psi = ScalarField(grid.rr * psi1.values, ODD, DIRICHLET, DIRICHLET)
        psi_z = ScalarField(d_dz(psi, grid).values, ODD, DIRICHLET, EXTRAPOLATE)
        level.append(integrate(psi.values**2 + gradient_sq(psi, grid) + psi1.values**2, grid))
        rate.append(integrate(psi_z.values**2 + gradient_sq(psi_z, grid) + d_dz(psi1, grid).values ** 2, grid))
    rhs = constants.D1**2
    integral = _running_integral(np.array(rate), series.times)[-1]
    return [
        tracked_entry("stream_energy", float(max(level)), rhs),
        tracked_entry("stream_dissipation", float(integral), rhs),
    ]


# ========= PHI / GAMMA ENERGY AND THE INTERACTION INTEGRAL =========

def _x_components(series: TimeSeries) -> np.ndarray:
    grid = series.grid
    phi_l2 = np.array([lp_norm(s.state.Phi, 2.0, grid) for s in series.snapshots])
    gamma_l2 = np.array([lp_norm(s.state.Gamma, 2.0, grid) for s in series.snapshots])
    grad_phi = np.array([integrate(gradient_sq(s.state.Phi, grid), grid) for s in series.snapshots])
    grad_gamma = np.array([integrate(gradient_sq(s.state.Gamma, grid), grid) for s in series.snapshots])
    times = series.times
    x_phi = np.maximum.accumulate(phi_l2) + np.sqrt(_running_integral(grad_phi, times))
    x_gamma = np.maximum.accumulate(gamma_l2) + np.sqrt(_running_integral(grad_gamma, times))
    return np.sqrt(x_phi**2 + x_gamma**2)


def x_trajectory(series: TimeSeries) -> list[tuple[float, float]]:
    """
    (t, X(t)) at every snapshot, X^2 = ||Phi||_V^2 + ||Gamma||_V^2 over (0, t).

    Uses the per-step "X" diagnostic when the run recorded it.
    """
    series.require_nonempty()
    if all("X" in s.diagnostics for s in series.snapshots):
        values = series.diagnostic("X")
    else:
        values = _x_components(series)
    values = np.maximum.accumulate(values)
    return [(float(t), float(x)) for t, x in zip(series.times, values)]


def interaction_integral(series: TimeSeries) -> float:
    """Space-time integral of (v_phi / r) Phi Gamma."""
    series.require_nonempty()
    grid = series.grid
    per_time = [
        integrate(s.state.v.v_phi.values / grid.rr * s.state.Phi.values * s.state.Gamma.values, grid)
        for s in series.snapshots
    ]
    return _weighted(per_time, series.dt_weights)


def phi_gamma_energy_ledger(series: TimeSeries, options: CertificateOptions,
                            constants: Optional[DataConstants] = None) -> LedgerEntry:
    """
    Tracked: X(t)^2 against
    (D2 / Dstar)^2 (1 + (R |v_phi|_inf)^(2 delta) / (delta^2 D2^2)) (|I| + D3^2).
    """
    constants = constants or series_constants(series)
    delta = options.delta
    lhs = x_trajectory(series)[-1][1] ** 2
    D2, Dstar = constants.D2, constants.Dstar
    scale = (D2 / Dstar) ** 2 if Dstar > 0.0 else 1.0
    vphi = _vphi_sup(series)
    growth = (series.grid.R * vphi) ** (2.0 * delta)
    if growth == 0.0:
        swirl_factor = 0.0
    elif D2 > 0.0:
        swirl_factor = growth / (delta**2 * D2**2)
    else:
        swirl_factor = math.inf
    interaction = abs(interaction_integral(series))
    rhs = scale * (1.0 + swirl_factor) * (interaction + constants.D3**2)
    return tracked_entry("phi_gamma_energy", lhs, rhs,
                         hypothesis={"delta": delta, "interaction": interaction})


def interaction_ledger(series: TimeSeries, options: CertificateOptions,
                       constants: Optional[DataConstants] = None) -> LedgerEntry:
    """
    Tracked: |I| against
    D2^d D0^(1-d) (|Phi|_2 |Gamma|_2)^alpha0 (|grad Phi|_2 |grad Gamma|_2)^(1-alpha0)
    over Omega^t, with D0 = sup_t |v_phi|_sigma and alpha0 = (sigma-3)(1-d) / (3 sigma).
    """
    constants = constants or series_constants(series)
    sigma = next((s for s in options.s_values if s > 3.0), None)
    if sigma is None:
        return skipped_entry("interaction", TRACKED, "no configured s exceeds 3")
    d = options.interaction_d
    alpha0 = (sigma - 3.0) * (1.0 - d) / (3.0 * sigma)
    grid = series.grid
    D0 = max(lp_norm(s.state.v.v_phi, sigma, grid) for s in series.snapshots)
    l2 = NormSpec(2.0, 2.0)
    grad = NormSpec(2.0, 2.0, derivative_order=1)
    phi, gamma = mixed_norm(series, "Phi", l2), mixed_norm(series, "Gamma", l2)
    grad_phi, grad_gamma = mixed_norm(series, "Phi", grad), mixed_norm(series, "Gamma", grad)
    rhs = (constants.D2**d * D0 ** (1.0 - d) * (phi * gamma) ** alpha0
           * (grad_phi * grad_gamma) ** (1.0 - alpha0))
    return tracked_entry("interaction", abs(interaction_integral(series)), rhs,
                         hypothesis={"sigma": sigma, "d": d, "alpha0": alpha0, "D0": D0})


# ========= ELLIPTIC ESTIMATES =========

def elliptic_ledgers(series: TimeSeries) -> list[LedgerEntry]:
    """Tracked H2, H3 and weighted estimates for psi1: the worst ratio over the snapshots."""
    from elliptic import h2_report, h3_report, weighted_report

    series.require_nonempty()
    grid = series.grid
    entries = []
    for name, build in (("h2", h2_report), ("h3", h3_report), ("h3_weighted", weighted_report)):
        worst = None
        all_zero = True
        for snap in _sampled(series):
            report = build(snap.state.psi1, snap.state.Gamma, grid)
            if report.lhs > 0.0 or report.rhs > 0.0:
                all_zero = False
            if report.ratio is not None and (worst is None or report.ratio > worst.ratio):
                worst = report
        if worst is None:
            reason = "both sides vanish (0/0)" if all_zero else "right-hand side vanishes at every snapshot"
            entries.append(skipped_entry(name, TRACKED, reason))
        else:
            entries.append(tracked_entry(name, worst.lhs, worst.rhs, hypothesis={"terms": worst.terms}))
    return entries


# ========= SWIRL GRADIENTS =========

def gradient_swirl_ledgers(series: TimeSeries, constants: Optional[DataConstants] = None) -> list[LedgerEntry]:
    """
    Tracked: max_t (|u_z|^2 + nu |grad u_z|^2_{2,Omega^t}) against D4^2 and
    max_t (|u_r|^2 + nu (|u_rr|^2 + |u_rz|^2)_{2,Omega^t}) against D5^2.
    """
    series.require_nonempty()
    constants = constants or series_constants(series)
    grid, nu, times = series.grid, series.nu, series.times
    z_level, z_rate, r_level, r_rate = [], [], [], []
    for snap in series.snapshots:
        u = snap.state.u
        u_z = ScalarField(d_dz(u, grid).values, ODD2, DIRICHLET, DIRICHLET)
        u_r = ScalarField(d_dr(u, grid).values, ODD)
        z_level.append(integrate(u_z.values**2, grid))
        z_rate.append(integrate(gradient_sq(u_z, grid), grid))
        r_level.append(integrate(u_r.values**2, grid))
        r_rate.append(integrate(d_dr(u_r, grid).values ** 2 + d_dz(u_r, grid).values ** 2, grid))
    lhs_z = np.max(np.array(z_level) + nu * _running_integral(np.array(z_rate), times))
    lhs_r = np.max(np.array(r_level) + nu * _running_integral(np.array(r_rate), times))
    return [
        tracked_entry("swirl_gradient_z", float(lhs_z), constants.D4**2),
        tracked_entry("swirl_gradient_r", float(lhs_r), constants.D5**2),
    ]


# ========= ORDER REDUCTION =========

def order_reduction_rhs(nu: float, eps0: float, R: float, vphi_sup: float, grad_gamma: float,
                        D6_sq: float) -> float:
    """(1/nu)(R^e/e |v_phi|^e + R^2e/e^2 |v_phi|^2e) |grad Gamma|_{2,Omega^t} + D6^2 with e = eps0."""
    if not 0.0 < eps0 < 1.0:
        raise DomainError(f"eps0 must lie in (0, 1), got {eps0}")
    swirl = R**eps0 / eps0 * vphi_sup**eps0 + R ** (2.0 * eps0) / eps0**2 * vphi_sup ** (2.0 * eps0)
    return swirl * grad_gamma / nu + D6_sq


def order_reduction_ledger(series: TimeSeries, eps0: float,
                           constants: Optional[DataConstants] = None) -> LedgerEntry:
    """Tracked: ||omega_r||_V^2 + ||omega_z||_V^2 + |Phi|^2_{2,Omega^t} against order_reduction_rhs."""
    if not 0.0 < eps0 < 1.0:
        raise DomainError(f"eps0 must lie in (0, 1), got {eps0}")
    series.require_nonempty()
    constants = constants or series_constants(series)
    grid = series.grid

    def omega_r(snap: Snapshot) -> ScalarField:
        return ScalarField(grid.rr * snap.state.Phi.values, ODD, DIRICHLET, DIRICHLET)

    def omega_z(snap: Snapshot) -> ScalarField:
        return omega_z_from_swirl(snap.state.u, grid)

    phi_sq = mixed_norm(series, "Phi", NormSpec(2.0, 2.0)) ** 2
    lhs = v_norm(series, omega_r) ** 2 + v_norm(series, omega_z) ** 2 + phi_sq
    grad_gamma = mixed_norm(series, "Gamma", NormSpec(2.0, 2.0, derivative_order=1))
    rhs = order_reduction_rhs(series.nu, eps0, grid.R, _vphi_sup(series), grad_gamma, constants.D6**2)
    return tracked_entry("order_reduction", lhs, rhs, hypothesis={"eps0": eps0})


# ========= SWIRL VELOCITY BOUNDS =========

def vphi_sup_ledger(series: TimeSeries, constants: Optional[DataConstants] = None) -> LedgerEntry:
    """
    Strict, per snapshot: |v_phi(t)|_inf <= (D2 / sqrt(nu)) D1^(1/4) X(t)^(3/4) + D7.
    The entry reports the snapshot with the largest lhs / rhs.
    """
    series.require_nonempty()
    constants = constants or series_constants(series)
    vphi = _diagnostic_or(series, "vphi_max", lambda s: lp_norm(s.state.v.v_phi, INF, series.grid))
    x_values = np.array([x for _, x in x_trajectory(series)])
    scale = constants.D2 / math.sqrt(series.nu) * constants.D1**0.25
    rhs = scale * x_values**0.75 + constants.D7
    tol = config.SUP_BOUND_TOL
    failing = vphi > rhs * (1.0 + tol) + ROUND_OFF
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs > 0.0, vphi / rhs, np.where(vphi > 0.0, np.inf, 0.0))
    k = int(np.argmax(ratios))
    entry = strict_entry("vphi_sup", float(vphi[k]), float(rhs[k]), tol,
                         hypothesis={"t": float(series.times[k]), "X": float(x_values[k])})
    if failing.any():
        entry.status = FAIL
    return entry


def vphi_s_ledgers(series: TimeSeries, s_values: Sequence[float],
                   constants: Optional[DataConstants] = None) -> list[LedgerEntry]:
    """
    Tracked, per s: sup_t |v_phi|_s against
    (D1^2 + |f_phi|_{s,1,Omega^t}) / lambda^(s-1) + |v_phi(0)|_s with lambda the observed lambda(s).
    """
    series.require_nonempty()
    constants = constants or series_constants(series)
    grid = series.grid
    entries = []
    for s in s_values:
        name = f"vphi_s{s:g}"
        try:
            lam = lambda_s(series, s)
        except UndefinedRatioError as exc:
            entries.append(skipped_entry(name, TRACKED, str(exc), hypothesis={"s": s}))
            continue
        lhs = max(lp_norm(snap.state.v.v_phi, s, grid) for snap in series.snapshots)
        forcing = _weighted([lp_norm(snap.forcing.f_phi, s, grid) for snap in series.snapshots],
                            series.dt_weights)
        rhs = (constants.D1**2 + forcing) / lam ** (s - 1.0) + lp_norm(series.initial.state.v.v_phi, s, grid)
        entries.append(tracked_entry(name, lhs, rhs, hypothesis={"s": s, "lambda": lam, "c0": lam}))
    return entries


# ========= HARDY =========

def hardy_ledgers(series: TimeSeries) -> list[LedgerEntry]:
    """Strict Hardy inequality with p = 2 on the mid-plane radial profile of the final u."""
    series.require_nonempty()
    grid = series.grid
    j = int(np.argmin(np.abs(grid.z_centers)))
    profile = series.final.state.u.values[:, j]
    entries = []
    for beta in (1.0, 0.0):
        lhs, rhs = hardy_ratio(profile, beta, 2.0, length=grid.R)
        entries.append(strict_entry(f"hardy_beta{beta:g}", lhs, rhs, config.HARDY_TOL,
                                    hypothesis={"beta": beta, "p": 2.0, "z": float(grid.z_centers[j])}))
    return entries


# ========= SMALL DATA =========

@dataclass
class FixedPointResult:
    """Outcome of M_{n+1} = kappa M_n^3 + G2 from M_0 = G2."""

    kappa: float
    G2: float
    M: float
    iterations: int
    converged: bool
    diverged: bool
    residual: float
    hypothesis_ok: bool
    contraction_ok: bool
    increment_ratio: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def smallness_threshold(kappa: float) -> float:
    return 1.0 / (kappa + 1.0) ** 1.5


def small_data_fixed_point(kappa: float, G2: float, tol: float = config.FIXED_POINT_TOL,
                           maxiter: int = config.FIXED_POINT_MAXITER) -> FixedPointResult:
    """
    Successive approximation of M = kappa M^3 + G2.

    The iteration stops once the increment drops to `tol`, after `maxiter`
    steps, or when the iterate passes 10 / sqrt(kappa) (divergence).
    """
    if kappa < 0 or G2 < 0:
        raise DomainError(f"kappa and G2 must be non-negative, got kappa={kappa}, G2={G2}")
    limit = config.FIXED_POINT_DIVERGENCE_FACTOR / math.sqrt(kappa) if kappa > 0 else math.inf
    M = G2
    previous_increment = None
    increment_ratio = None
    converged = diverged = False
    iterations = 0
    while iterations < maxiter:
        iterations += 1
        following = kappa * M**3 + G2
        increment = abs(following - M)
        if previous_increment:
            increment_ratio = increment / previous_increment
        previous_increment = increment
        M = following
        if increment <= tol:
            converged = True
            break
        if M > limit:
            diverged = True
            break
    if diverged:
        logger.warning("Fixed point iteration diverged after %d steps (kappa=%.4g, G2=%.4g)",
                       iterations, kappa, G2)
    return FixedPointResult(
        kappa=kappa, G2=G2, M=M, iterations=iterations, converged=converged, diverged=diverged,
        residual=abs(M - (kappa * M**3 + G2)),
        hypothesis_ok=G2 <= smallness_threshold(kappa),
        contraction_ok=kappa / (kappa + 1.0) ** 3 < 1.0,
        increment_ratio=increment_ratio,
    )


def small_data_ledger(series: TimeSeries, constants: Optional[DataConstants] = None,
                      fixed_point: Optional[FixedPointResult] = None) -> LedgerEntry:
    """Strict under the smallness hypothesis: |v_phi|_{inf,Omega^t} <= 1 / sqrt(kappa + 1)."""
    constants = constants or series_constants(series)
    fixed_point = fixed_point or small_data_fixed_point(constants.kappa, constants.G2)
    hypothesis = {"G2": constants.G2, "kappa": constants.kappa,
                  "threshold": smallness_threshold(constants.kappa), "M": fixed_point.M,
                  "holds": fixed_point.hypothesis_ok}
    if not fixed_point.hypothesis_ok:
        return skipped_entry("small_data", STRICT, "smallness hypothesis G2 <= (kappa+1)^(-3/2) fails",
                             hypothesis=hypothesis)
    rhs = 1.0 / math.sqrt(constants.kappa + 1.0)
    return strict_entry("small_data", _vphi_sup(series), rhs, config.SUP_BOUND_TOL, hypothesis=hypothesis)


# ========= REPORT =========

def classify_cases(series: TimeSeries, s_values: Sequence[float], c0: float) -> dict[str, dict]:
    """lambda(s) per s, and which side of c0 the run falls on, with D0 = sup_t |v_phi|_s."""
    grid = series.grid
    cases = {}
    for s in s_values:
        D0 = max(lp_norm(snap.state.v.v_phi, s, grid) for snap in series.snapshots)
        try:
            lam = lambda_s(series, s)
        except UndefinedRatioError as exc:
            cases[f"{s:g}"] = {"s": s, "lambda": None, "case": "undefined", "D0": D0, "note": str(exc)}
            continue
        cases[f"{s:g}"] = {"s": s, "lambda": lam, "case": LARGE_RATIO if lam >= c0 else SMALL_RATIO,
                           "D0": D0, "note": ""}
    return cases


@dataclass
class CertificateReport:
    constants: DataConstants
    entries: list[LedgerEntry]
    x_trajectory: list[tuple[float, float]]
    cases: dict[str, dict]
    fixed_point: FixedPointResult
    options: CertificateOptions
    metadata: dict[str, Any] = field(default_factory=dict)

    def entry(self, name: str) -> LedgerEntry:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)

    @property
    def lambdas(self) -> dict[str, Optional[float]]:
        return {key: case["lambda"] for key, case in self.cases.items()}

    def strict_failures(self) -> list[LedgerEntry]:
        return [e for e in self.entries if e.failed]

    @property
    def passed(self) -> bool:
        return not self.strict_failures()

    def counts(self) -> dict[str, int]:
        counts = {PASS: 0, FAIL: 0, TRACKED: 0, SKIPPED: 0, ERROR: 0}
        for entry in self.entries:
            counts[entry.status] = counts.get(entry.status, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "counts": self.counts(),
            "constants": self.constants.to_dict(),
            "entries": [e.to_dict() for e in self.entries],
            "x_trajectory": [list(pair) for pair in self.x_trajectory],
            "cases": self.cases,
            "fixed_point": self.fixed_point.to_dict(),
            "options": self.options.to_dict(),
            "metadata": self.metadata,
        }


def _collect(entries: list[LedgerEntry], name: str, mode: str, evaluate: Callable[[], Any]) -> None:
    try:
        result = evaluate()
    except (SimulationError, ValueError, ArithmeticError) as exc:
        logger.warning("Ledger %s could not be evaluated: %s", name, exc)
        entries.append(LedgerEntry(name, None, None, None, mode, ERROR, note=str(exc)))
        return
    entries.extend(result if isinstance(result, list) else [result])


def certificate_report(series: TimeSeries, options: Optional[CertificateOptions] = None) -> CertificateReport:
    """
    Evaluate every ledger over a completed run.

    A ledger that raises is recorded with status "error"; the report itself
    only fails for an empty series or invalid options.
    """
    options = (options or CertificateOptions()).validate()
    series.require_nonempty()
    constants = series_constants(series, options.constant_c)
    fixed_point = small_data_fixed_point(constants.kappa, constants.G2)

    entries: list[LedgerEntry] = []
    _collect(entries, "energy", STRICT, lambda: energy_ledger(series, constants))
    _collect(entries, "max_principle", STRICT, lambda: max_principle_ledger(series, constants))
    _collect(entries, "stream_energy", TRACKED, lambda: stream_energy_ledgers(series, constants))
    _collect(entries, "phi_gamma_energy", TRACKED, lambda: phi_gamma_energy_ledger(series, options, constants))
    _collect(entries, "interaction", TRACKED, lambda: interaction_ledger(series, options, constants))
    _collect(entries, "elliptic", TRACKED, lambda: elliptic_ledgers(series))
    _collect(entries, "swirl_gradient", TRACKED, lambda: gradient_swirl_ledgers(series, constants))
    _collect(entries, "order_reduction", TRACKED, lambda: order_reduction_ledger(series, options.eps0, constants))
    _collect(entries, "vphi_sup", STRICT, lambda: vphi_sup_ledger(series, constants))
    _collect(entries, "vphi_s", TRACKED, lambda: vphi_s_ledgers(series, options.s_values, constants))
    _collect(entries, "small_data", STRICT, lambda: small_data_ledger(series, constants, fixed_point))
    _collect(entries, "hardy", STRICT, lambda: hardy_ledgers(series))

    report = CertificateReport(
        constants=constants,
        entries=entries,
        x_trajectory=x_trajectory(series),
        cases=classify_cases(series, options.s_values, options.c0),
        fixed_point=fixed_point,
        options=options,
        metadata={key: series.metadata[key] for key in ("scenario", "scheme", "advection") if key in series.metadata},
    )
    counts = report.counts()
    logger.info("Certificate: %d pass, %d fail, %d tracked, %d skipped, %d error",
                counts[PASS], counts[FAIL], counts[TRACKED], counts[SKIPPED], counts[ERROR])
    return report


# ========= RATIO STABILITY =========

def ratio_stability(reports: Sequence[tuple[str, float, dict]],
                    tol: float = config.RATIO_STABILITY_TOL) -> list[dict]:
    """
    Compare tracked ratios across runs.

    Args:
        reports: (label, h, certificate dict) per run, in any order
        tol: Largest relative spread (max - min) / max still called stable

    Returns:
        One row per tracked entry name with the ratio of each run and a verdict
        ("stable", "unstable", or "insufficient" with fewer than two finite ratios)
    """
    ordered = sorted(reports, key=lambda item: -item[1])
    names: list[str] = []
    for _, _, report in ordered:
        for entry in report["entries"]:
            if entry["mode"] == TRACKED and entry["name"] not in names:
                names.append(entry["name"])
    rows = []
    for name in names:
        ratios = {}
        for label, _, report in ordered:
            match = next((e for e in report["entries"] if e["name"] == name), None)
            ratios[label] = None if match is None else match["ratio"]
        finite = [r for r in ratios.values() if r is not None and math.isfinite(r)]
        if len(finite) < 2:
            verdict, spread = "insufficient", None
        else:
            spread = (max(finite) - min(finite)) / max(finite) if max(finite) > 0 else 0.0
            verdict = "stable" if spread <= tol else "unstable"
            if verdict == "unstable":
                logger.warning("Tracked ratio %s varies by %.1f%% across runs", name, 100.0 * spread)
        rows.append({"name": name, "ratios": ratios, "spread": spread, "verdict": verdict})
    return rows
