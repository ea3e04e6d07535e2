"""
Norms over Omega and Omega x (0, t), and the functional inequalities used by
the certificate ledgers.

Spatial integrals use the midpoint weights of the grid, time integrals use
trapezoidal weights over the recorded snapshots, and p = inf norms are
cell maxima.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np

from errors import ContractError, DomainError, UndefinedRatioError
from fields import Forcing, ScalarField, State, d2_dr2, d2_drdz, d2_dz2, d_dr, d_dz
from grid import Grid, integrate

logger = logging.getLogger(__name__)

INF = math.inf

# Relative size of a boundary trace, in units of h^2 * max|f|, still taken as vanishing
VANISHING_TRACE_FACTOR = 8.0


# ========= TIME SERIES =========

@dataclass(eq=False)
class Snapshot:
    """A recorded state with the forcing applied at that time and named scalar diagnostics."""

    state: State
    forcing: Forcing
    diagnostics: dict[str, float] = field(default_factory=dict)

    @property
    def t(self) -> float:
        return self.state.t


@dataclass(eq=False)
class TimeSeries:
    """Snapshots of one run on a fixed grid, in increasing time starting at 0."""

    grid: Grid
    nu: float
    snapshots: list[Snapshot] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def append(self, snapshot: Snapshot) -> None:
        if not self.snapshots:
            if snapshot.t != 0.0:
                raise ContractError(f"A series must start at t=0, got t={snapshot.t}")
        elif snapshot.t <= self.snapshots[-1].t:
            raise ContractError(
                f"Snapshot times must increase: {snapshot.t} after {self.snapshots[-1].t}")
        self.snapshots.append(snapshot)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def horizon(self) -> float:
        return self.snapshots[-1].t if self.snapshots else 0.0

    @property
    def dt_weights(self) -> np.ndarray:
        return trapezoid_weights(self.times)

    @property
    def initial(self) -> Snapshot:
        self.require_nonempty()
        return self.snapshots[0]

    @property
    def final(self) -> Snapshot:
        self.require_nonempty()
        return self.snapshots[-1]

    def require_nonempty(self) -> None:
        if not self.snapshots:
            raise ContractError("Time series is empty")

    def diagnostic(self, name: str) -> np.ndarray:
        """Values of a named diagnostic at every snapshot."""
        try:
            return np.array([s.diagnostics[name] for s in self.snapshots], dtype=float)
        except KeyError as exc:
            raise ContractError(f"Diagnostic '{name}' missing from the series") from exc


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    """Weights w_k with sum_k w_k g(t_k) the trapezoid rule on the given nodes."""
    t = np.asarray(times, dtype=float)
    weights = np.zeros_like(t)
    if t.size < 2:
        return weights
    gaps = np.diff(t)
    weights[:-1] += 0.5 * gaps
    weights[1:] += 0.5 * gaps
    return weights


def time_integral(values: np.ndarray, times: np.ndarray) -> float:
    return float(np.dot(trapezoid_weights(times), np.asarray(values, dtype=float)))


# ========= SELECTION =========

Selector = Union[str, Callable[[Snapshot], Any]]

_STATE_FIELDS = {
    "u": lambda s: s.u,
    "Gamma": lambda s: s.Gamma,
    "Phi": lambda s: s.Phi,
    "psi1": lambda s: s.psi1,
    "v_r": lambda s: s.v.v_r,
    "v_phi": lambda s: s.v.v_phi,
    "v_z": lambda s: s.v.v_z,
}


def select(snapshot: Snapshot, selector: Selector) -> ScalarField:
    """Resolve a field name or a callable to a ScalarField of the snapshot."""
    if callable(selector):
        chosen = selector(snapshot)
    else:
        try:
            chosen = _STATE_FIELDS[selector](snapshot.state)
        except KeyError as exc:
            raise ContractError(
                f"Unknown field '{selector}', expected one of {sorted(_STATE_FIELDS)}") from exc
    if isinstance(chosen, ScalarField):
        return chosen
    return ScalarField(np.asarray(chosen, dtype=float))


# ========= SPATIAL NORMS =========

def _values(f: Any) -> np.ndarray:
    return np.asarray(getattr(f, "values", f), dtype=float)


def _check_exponent(p: float, name: str = "p") -> None:
    if not p >= 1.0:
        raise DomainError(f"{name} must lie in [1, inf], got {p}")


def lp_norm(f: Any, p: float, grid: Grid) -> float:
    """|f|_{p,Omega}; p = inf is the maximum over cell centers."""
    _check_exponent(p)
    v = np.abs(_values(f))
    if v.shape != grid.shape:
        integrate(v, grid)  # raises the dimension error
    if p == INF:
        return float(v.max()) if v.size else 0.0
    return integrate(v**p, grid) ** (1.0 / p)


def gradient_magnitude(f: ScalarField, grid: Grid) -> np.ndarray:
    return np.sqrt(d_dr(f, grid).values ** 2 + d_dz(f, grid).values ** 2)


@dataclass(frozen=True)
class NormSpec:
    """|r^{-weight_exponent} D^k f|_{p,q,Omega^t} with k = derivative_order."""

    p: float = 2.0
    q: float = 2.0
    derivative_order: int = 0
    weight_exponent: float = 0.0

    def __post_init__(self):
        _check_exponent(self.p, "p")
        _check_exponent(self.q, "q")
        if self.derivative_order not in (0, 1):
            raise DomainError(f"derivative_order must be 0 or 1, got {self.derivative_order}")
        if self.weight_exponent < 0:
            raise DomainError(f"weight_exponent must be >= 0, got {self.weight_exponent}")


def spatial_norm(f: ScalarField, spec: NormSpec, grid: Grid) -> float:
    v = gradient_magnitude(f, grid) if spec.derivative_order == 1 else np.abs(f.values)
    if spec.weight_exponent:
        v = v / grid.rr**spec.weight_exponent
    return lp_norm(v, spec.p, grid)


def temporal_norm(values: np.ndarray, times: np.ndarray, q: float) -> float:
    """L_q(0, t) norm of per-snapshot values."""
    v = np.abs(np.asarray(values, dtype=float))
    if q == INF:
        return float(v.max())
    return time_integral(v**q, times) ** (1.0 / q)


def mixed_norm(series: TimeSeries, field_selector: Selector, spec: NormSpec) -> float:
    """|f|_{p,q,Omega^t}: L_q in time of the spatial L_p norms."""
    series.require_nonempty()
    per_time = [spatial_norm(select(s, field_selector), spec, series.grid) for s in series.snapshots]
    return temporal_norm(np.array(per_time), series.times, spec.q)


def v_norm(series: TimeSeries, field_selector: Selector, grid: Optional[Grid] = None) -> float:
    """||f||_V = |f|_{2,inf,Omega^t} + |grad f|_{2,Omega^t}."""
    series.require_nonempty()
    sup_part = mixed_norm(series, field_selector, NormSpec(2.0, INF))
    gradient_part = mixed_norm(series, field_selector, NormSpec(2.0, 2.0, derivative_order=1))
    return sup_part + gradient_part


def lambda_s(series: TimeSeries, s: float) -> float:
    """sup_t |v_phi|_{s,Omega} / sup_t |v_phi|_{inf,Omega}."""
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    series.require_nonempty()
    grid = series.grid
    denominator = max(lp_norm(snap.state.v.v_phi, INF, grid) for snap in series.snapshots)
    if denominator == 0.0:
        raise UndefinedRatioError("v_phi vanishes identically; lambda(s) is undefined")
    numerator = max(
        integrate(np.abs(snap.state.v.v_phi.values) ** s, grid) ** (1.0 / s) for snap in series.snapshots
    )
    return numerator / denominator


# ========= HARDY INEQUALITY =========

def hardy_ratio(f: np.ndarray, beta: float, p: float, length: float = 1.0) -> tuple[float, float]:
    """
    Both sides of |x^-beta F|_p <= |x^(1-beta) f|_p / |beta - 1/p| on the half line.

    f holds midpoint samples of a function supported in (0, length). For
    beta > 1/p, F(x) is the integral of f over (0, x) and the exact tail
    contribution beyond `length` is added; for beta < 1/p, F(x) is the
    integral over (x, length).
    """
    _check_exponent(p)
    inv_p = 0.0 if p == INF else 1.0 / p
    if beta == inv_p:
        raise DomainError(f"beta must differ from 1/p = {inv_p}")
    samples = np.asarray(f, dtype=float)
    n = samples.size
    h = length / n
    x = (np.arange(n) + 0.5) * h
    total = h * samples.sum()

    if beta > inv_p:
        F = h * (np.cumsum(samples) - 0.5 * samples)
    else:
        F = h * (total - np.cumsum(samples) + 0.5 * samples)

    left = np.abs(x ** (-beta) * F)
    right = np.abs(x ** (1.0 - beta) * samples)
    constant = 1.0 / abs(beta - inv_p)

    if p == INF:
        lhs = float(left.max()) if n else 0.0
        if beta > inv_p:
            lhs = max(lhs, abs(total) * length ** (-beta))
        return lhs, constant * (float(right.max()) if n else 0.0)

    lhs_p = h * np.sum(left**p)
    if beta > inv_p:
        lhs_p += abs(total) ** p * length ** (1.0 - beta * p) / (beta * p - 1.0)
    rhs = constant * (h * np.sum(right**p)) ** (1.0 / p)
    return float(lhs_p ** (1.0 / p)), float(rhs)


# ========= INTERPOLATION INEQUALITIES =========

SOBOLEV = "sobolev"
HARDY_WEIGHTED = "hardy_weighted"


@dataclass
class InterpolationReport:
    kind: str
    lhs: float
    rhs_c_free: float
    ratio: float
    exponents: dict[str, float]
    hypotheses: dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lhs": self.lhs, "rhs_c_free": self.rhs_c_free, "ratio": self.ratio,
                "exponents": dict(self.exponents), "hypotheses": dict(self.hypotheses)}


def vanishing_hypotheses(f: ScalarField, grid: Grid) -> dict[str, bool]:
    """Whether f vanishes on the wall S1 and on all of S, to second-order trace accuracy."""
    scale = float(np.max(np.abs(f.values))) if f.values.size else 0.0
    tol = VANISHING_TRACE_FACTOR * grid.h**2 * scale
    wall = float(np.max(np.abs(grid.trace_wall(f.values))))
    bottom, top = grid.trace_lids(f.values)
    lids = float(max(np.max(np.abs(bottom)), np.max(np.abs(top))))
    return {"vanishes_on_S1": wall <= tol, "vanishes_on_S": wall <= tol and lids <= tol}


def _ratio(lhs: float, rhs: float) -> float:
    if lhs == 0.0:
        return 0.0
    return lhs / rhs if rhs > 0.0 else INF


def _hardy_weighted(f: ScalarField, params: dict, grid: Grid) -> InterpolationReport:
    p = float(params["p"])
    s = float(params["s"])
    q = float(params.get("q", p))
    violated = []
    if not 1.0 < p <= 3.0:
        violated.append("1 < p <= 3")
    if not 0.0 <= s <= p:
        violated.append("0 <= s <= p")
    if not s < 2.0:
        violated.append("s < 2")
    upper = INF if p == 3.0 else p * (3.0 - s) / (3.0 - p)
    if not p <= q <= upper:
        violated.append(f"p <= q <= p(3-s)/(3-p) = {upper}")
    if violated:
        raise DomainError("hardy_weighted parameters violate: " + "; ".join(violated))
    hypotheses = vanishing_hypotheses(f, grid)
    if not hypotheses["vanishes_on_S"]:
        raise DomainError("hardy_weighted needs f to vanish on S (wall and lids)")

    a = (3.0 - s) / q - 3.0 / p + 1.0
    b = 3.0 / p - (3.0 - s) / q
    lhs = integrate(np.abs(f.values) ** q / grid.rr**s, grid) ** (1.0 / q)
    f_norm = lp_norm(f, p, grid)
    grad_norm = lp_norm(gradient_magnitude(f, grid), p, grid)
    rhs = (f_norm**a if a else 1.0) * (grad_norm**b if b else 1.0)
    return InterpolationReport(HARDY_WEIGHTED, lhs, rhs, _ratio(lhs, rhs),
                               {"p": p, "s": s, "q": q, "f_exponent": a, "grad_exponent": b},
                               hypotheses)


def _derivative_sum(f: ScalarField, order: int, p: float, grid: Grid) -> float:
    if order == 0:
        return lp_norm(f, p, grid)
    if order == 1:
        return lp_norm(d_dr(f, grid), p, grid) + lp_norm(d_dz(f, grid), p, grid)
    return (lp_norm(d2_dr2(f, grid), p, grid) + lp_norm(d2_drdz(f, grid), p, grid)
            + lp_norm(d2_dz2(f, grid), p, grid))


def _sobolev(f: ScalarField, params: dict, grid: Grid) -> InterpolationReport:
    n = float(params.get("n", 3))
    p = float(params["p"])
    p1 = float(params["p1"])
    p2 = float(params["p2"])
    r = int(params.get("r", 0))
    l = int(params.get("l", 1))
    for name, value in (("p", p), ("p1", p1), ("p2", p2)):
        _check_exponent(value, name)
    if not 0 <= r < l <= 2:
        raise DomainError(f"need 0 <= r < l <= 2, got r={r}, l={l}")
    inv = {name: (0.0 if value == INF else 1.0 / value) for name, value in (("p", p), ("p1", p1), ("p2", p2))}
    denominator = n * inv["p1"] - n * inv["p2"] + l
    if denominator == 0.0:
        raise DomainError("theta is undefined: n/p1 - n/p2 + l = 0")
    theta = (n * inv["p1"] - n * inv["p"] + r) / denominator
    if not r / l <= theta <= 1.0:
        raise DomainError(f"theta = {theta:.6g} violates r/l <= theta <= 1")

    lhs = _derivative_sum(f, r, p, grid)
    sobolev_norm = sum(_derivative_sum(f, k, p2, grid) for k in range(l + 1))
    rhs = lp_norm(f, p1, grid) ** (1.0 - theta) * sobolev_norm**theta
    return InterpolationReport(SOBOLEV, lhs, rhs, _ratio(lhs, rhs),
                               {"n": n, "p": p, "p1": p1, "p2": p2, "r": r, "l": l, "theta": theta},
                               vanishing_hypotheses(f, grid))


def interpolation_ratio(kind: str, f: ScalarField, params: dict, grid: Grid) -> InterpolationReport:
    """
    Constant-free sides of an interpolation inequality and their ratio.

    The ratio is an empirical lower bound for the unknown constant; it is 0
    when f vanishes.
    """
    if kind == HARDY_WEIGHTED:
        return _hardy_weighted(f, params, grid)
    if kind == SOBOLEV:
        return _sobolev(f, params, grid)
    raise DomainError(f"Unknown interpolation kind '{kind}', expected '{SOBOLEV}' or '{HARDY_WEIGHTED}'")

