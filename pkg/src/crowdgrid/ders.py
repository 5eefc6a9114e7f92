"""Device models: dispatchable generation, batteries, shapeable loads,
solar/uncontrollable profiles, and the crowdsourcee preference registry.

All powers are in MW and energies in MWh at the device layer; the market
builders convert to per-unit when assembling optimization problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CT1 = "CT1"
CT2 = "CT2"
UTILITY = "utility"  # buyer id for Type A trades

FEAS_TOL = 1e-8


class DeviceError(ValueError):
    """Bad device parameters or infeasible device operation."""


@dataclass(frozen=True)
class GeneratorSpec:
    """Quadratic-cost dispatchable generator: cost = alpha p^2 + beta p + gamma.

    Coefficients may be scalars (constant over the horizon) or length-T arrays.
    """

    bus: int
    alpha: float | np.ndarray
    beta: float | np.ndarray
    gamma: float | np.ndarray
    p_min: float
    p_max: float
    ramp: float
    q_min: float | None = None  # None = unbounded reactive capability
    q_max: float | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.alpha) < 0):
            raise DeviceError("alpha must be >= 0 for a convex cost")
        if self.p_min > self.p_max:
            raise DeviceError("generator p_min exceeds p_max")
        if self.ramp < 0:
            raise DeviceError("generator ramp must be >= 0")

    def coeff_at(self, t: int) -> tuple[float, float, float]:
        def pick(c):
            arr = np.asarray(c, dtype=float)
            return float(arr) if arr.ndim == 0 else float(arr[t])
        return pick(self.alpha), pick(self.beta), pick(self.gamma)


@dataclass(frozen=True)
class BatterySpec:
    bus: int
    eta_in: float
    eta_out: float
    p_cha_max: float
    p_dis_max: float
    e_min: float
    e_max: float
    e_init: float

    def __post_init__(self):
        if not (0 < self.eta_in <= 1 and 0 < self.eta_out <= 1):
            raise DeviceError("battery efficiencies must lie in (0, 1]")
        if not (self.e_min <= self.e_init <= self.e_max):
            raise DeviceError("battery e_init outside [e_min, e_max]")
        if self.p_cha_max < 0 or self.p_dis_max < 0:
            raise DeviceError("battery power limits must be >= 0")


@dataclass
class BatteryTrajectory:
    """Per-step battery operation: stored energy, charge and discharge power."""

    e: np.ndarray  # MWh, end-of-step stored energy
    h: np.ndarray  # MW, charging power
    d: np.ndarray  # MW, discharging power

    @property
    def p_b(self) -> np.ndarray:
        """Net battery output (positive = injecting)."""
        return self.d - self.h


@dataclass(frozen=True)
class ShapeableLoadSpec:
    bus: int
    e_demand: float  # MWh over the horizon
    t_start: int  # first admissible hour index (inclusive)
    t_end: int  # last admissible hour index (inclusive)
    s_min: float
    s_max: float
    u: float = 0.0  # urgency weight for the disutility term
    t_set: int = 0  # disutility applies for t <= t_set

    def __post_init__(self):
        if self.t_start >= self.t_end:
            raise DeviceError("shapeable window must satisfy t_start < t_end")
        if self.s_min > self.s_max:
            raise DeviceError("shapeable s_min exceeds s_max")
        if not 0 <= self.u <= 1:
            raise DeviceError("urgency weight must lie in [0, 1]")
        width = self.t_end - self.t_start + 1
        if self.e_demand > width * self.s_max + FEAS_TOL:
            raise DeviceError("shapeable demand exceeds window capacity")


@dataclass(frozen=True)
class Profile:
    """Given (non-dispatchable) power series: uncontrollable load or solar."""

    bus: int
    kind: str  # "uncontrollable-load" | "solar"
    values: np.ndarray  # MW, length T
    reactive: np.ndarray | None = None  # MVAr, uncontrollable loads only

    def __post_init__(self):
        if self.kind not in ("uncontrollable-load", "solar"):
            raise DeviceError(f"unknown profile kind {self.kind!r}")
        if np.any(np.asarray(self.values) < 0):
            raise DeviceError("profile values must be >= 0")
        if self.reactive is not None and self.kind != "uncontrollable-load":
            raise DeviceError("only uncontrollable loads carry reactive power")


@dataclass(frozen=True)
class TradeRequest:
    """A declared energy trading transaction.

    Type A: seller -> utility (buyer_bus == "utility").
    Type B: CT2 seller -> CT2 buyer at a negotiated price.
    The schedule is constant power over the window: energy / window length.
    """

    seller_bus: int
    buyer_bus: int | str
    ett_type: str  # "A" | "B"
    window: tuple[int, int]  # hour indices, inclusive
    energy: float  # MWh
    price: float | None = None  # $/MWh, Type B only

    def __post_init__(self):
        if self.ett_type not in ("A", "B"):
            raise DeviceError(f"unknown ETT type {self.ett_type!r}")
        if self.energy <= 0:
            raise DeviceError("trade energy must be positive")
        lo, hi = self.window
        if lo > hi:
            raise DeviceError("trade window is empty")
        if self.ett_type == "A" and self.buyer_bus != UTILITY:
            raise DeviceError("Type A trades sell to the utility")
        if self.ett_type == "B" and self.buyer_bus == UTILITY:
            raise DeviceError("Type B trades are peer-to-peer")

    @property
    def hours(self) -> range:
        return range(self.window[0], self.window[1] + 1)

    @property
    def rate(self) -> float:
        """Constant power over the declared window, MW."""
        return self.energy / len(self.hours)


@dataclass
class PreferenceSet:
    """Per-user knobs communicated to the operator.

    CT2 users declare per-hour willingness to sell to the utility and any
    peer trades; with neither, their DER variables are excluded from the
    day-ahead program (forced to zero).
    """

    sell_to_utility: np.ndarray | None = None  # length-T booleans (CT2)
    p2p_trades: list[TradeRequest] = field(default_factory=list)
    u: float | None = None  # urgency override
    t_set: int | None = None

    def sells_at(self, t: int) -> bool:
        return bool(self.sell_to_utility is not None and self.sell_to_utility[t])

    @property
    def inactive(self) -> bool:
        """True when no sell flags and no declared trades (exclusion rule)."""
        no_flags = self.sell_to_utility is None or not bool(np.any(self.sell_to_utility))
        return no_flags and not self.p2p_trades


@dataclass
class Crowdsourcee:
    bus: int
    ct_class: str
    preferences: PreferenceSet = field(default_factory=PreferenceSet)

    def __post_init__(self):
        if self.ct_class not in (CT1, CT2):
            raise DeviceError(f"unknown crowdsourcee class {self.ct_class!r}")


def battery_transition(spec: BatterySpec, e_prev: float, h: float, d: float,
                       dt: float = 1.0) -> float:
    """One-step stored-energy update: e + h*eta_in*dt - (d/eta_out)*dt."""
    if not (-FEAS_TOL <= h <= spec.p_cha_max + FEAS_TOL):
        raise DeviceError(f"charging power {h} outside [0, {spec.p_cha_max}]")
    if not (-FEAS_TOL <= d <= spec.p_dis_max + FEAS_TOL):
        raise DeviceError(f"discharging power {d} outside [0, {spec.p_dis_max}]")
    return e_prev + h * spec.eta_in * dt - (d / spec.eta_out) * dt


def battery_feasible(spec: BatterySpec, traj: BatteryTrajectory,
                     dt: float = 1.0, tol: float = FEAS_TOL) -> tuple[bool, str | None]:
    """Check a trajectory against the battery model; returns (ok, violation).

    The violation string names the first broken constraint: "transition",
    "discharge-limit", "charge-limit", or "energy-bounds", with the step index.
    """
    e, h, d = np.asarray(traj.e, float), np.asarray(traj.h, float), np.asarray(traj.d, float)
    if not (len(e) == len(h) == len(d)):
        raise DeviceError("trajectory arrays must share a length")
    e_prev = spec.e_init
    for t in range(len(e)):
        if d[t] < -tol or d[t] > spec.p_dis_max + tol:
            return False, f"discharge-limit at t={t}"
        if h[t] < -tol or h[t] > spec.p_cha_max + tol:
            return False, f"charge-limit at t={t}"
        expect = e_prev + h[t] * spec.eta_in * dt - (d[t] / spec.eta_out) * dt
        if abs(e[t] - expect) > max(tol, 1e-6 * max(1.0, abs(expect))):
            return False, f"transition at t={t}"
        if e[t] < spec.e_min - tol or e[t] > spec.e_max + tol:
            return False, f"energy-bounds at t={t}"
        e_prev = e[t]
    return True, None


def shapeable_feasible(spec: ShapeableLoadSpec, series: np.ndarray,
                       dt: float = 1.0, tol: float = FEAS_TOL) -> tuple[bool, str | None]:
    """Check a shapeable schedule: exact energy, window support, power bounds."""
    s = np.asarray(series, float)
    for t in range(len(s)):
        inside = spec.t_start <= t <= spec.t_end
        if not inside:
            if abs(s[t]) > tol:
                return False, f"outside-window at t={t}"
        else:
            if s[t] < spec.s_min - tol or s[t] > spec.s_max + tol:
                return False, f"power-bounds at t={t}"
    if abs(float(np.sum(s)) * dt - spec.e_demand) > max(tol, 1e-6 * max(1.0, spec.e_demand)):
        return False, "energy-demand"
    return True, None


def generation_cost(spec: GeneratorSpec, p: float, t: int = 0) -> float:
    """Quadratic generation cost alpha p^2 + beta p + gamma at hour t."""
    a, b, g = spec.coeff_at(t)
    return a * p * p + b * p + g


def disutility(spec: ShapeableLoadSpec, s_t: float, t: int) -> float:
    """Inconvenience of running below s_max before the urgency deadline."""
    if t > spec.t_set:
        return 0.0
    diff = s_t - spec.s_max
    return spec.u * diff * diff


@dataclass(frozen=True)
class InjectionComponents:
    """Per-bus power components at one hour, MW (all default to zero)."""

    pg: float = 0.0  # dispatchable generation
    pb: float = 0.0  # battery net output
    pr: float = 0.0  # solar
    pu: float = 0.0  # uncontrollable load
    ps: float = 0.0  # shapeable load


def net_injection(parts: InjectionComponents, ct_class: str | None = None,
                  prefs: PreferenceSet | None = None) -> float:
    """Net real injection pg + pb + pr - pu - ps.

    For a CT2 bus whose preferences declare no trades and no sell flags,
    the DER terms (pr, pb, ps) are excluded (forced to zero): the operator
    cannot count on devices it does not control.
    """
    if ct_class == CT2 and (prefs is None or prefs.inactive):
        return parts.pg - parts.pu
    return parts.pg + parts.pb + parts.pr - parts.pu - parts.ps


def ct2_net_injection(parts: InjectionComponents, ct_class: str = CT2) -> float:
    """Incentive-eligible net injection pr - ps + pb of a CT2 bus."""
    if ct_class != CT2:
        raise DeviceError("net-injection incentives apply to CT2 buses only")
    return parts.pr - parts.ps + parts.pb
