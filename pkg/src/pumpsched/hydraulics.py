"""Deterministic pump and tank physics.

A pump is described by a quadratic head curve ``H(Q) = h0 - c*Q**2`` and a
parabolic efficiency curve centred on the best efficiency point (BEP).  The
network it feeds is described by a system curve ``H(Q) = H_st + k*Q**2``
whose static part follows the tank level and whose slope shrinks as water
demand grows.  The operating point is the unique intersection of the two
curves and is available in closed form; no iteration is used anywhere.

Speed control scales the pump curve by the affinity laws (flow proportional
to speed, head to speed squared) and optionally corrects the peak efficiency
for the Reynolds-number change via the Ackeret relation.

All functions are pure; everything here is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

GRAVITY = 9.81  # m/s^2
WATER_DENSITY = 1000.0  # kg/m^3

PUMP_IDS = ("NP1", "NP2", "NP3", "NP4")


@dataclass(frozen=True)
class PumpModel:
    """One distribution pump at its rated speed.

    head curve:       H(Q) = h0 - c * Q**2            [m, Q in m^3/h]
    efficiency curve: eta(Q) = eta_bep - eta_coeff * (Q - q_bep)**2
    """

    id: str
    h0: float          # shutoff head at rated speed, m
    c: float           # head-curve curvature, m/(m^3/h)^2
    q_bep: float       # flow at best efficiency point, m^3/h
    eta_bep: float     # peak efficiency, (0, 1]
    eta_coeff: float   # efficiency-curve curvature
    rated_speed: float = 1.0

    def __post_init__(self):
        if self.h0 <= 0:
            raise ValueError(f"{self.id}: shutoff head must be positive, got {self.h0}")
        if self.c <= 0:
            raise ValueError(f"{self.id}: head-curve curvature must be positive, got {self.c}")
        if not 0 < self.eta_bep <= 1:
            raise ValueError(f"{self.id}: eta_bep must be in (0, 1], got {self.eta_bep}")
        if self.eta_coeff < 0:
            raise ValueError(f"{self.id}: eta_coeff must be >= 0, got {self.eta_coeff}")
        runout = math.sqrt(self.h0 / self.c)
        if not 0 < self.q_bep < runout:
            raise ValueError(
                f"{self.id}: q_bep must lie in (0, runout={runout:.1f}), got {self.q_bep}"
            )

    @property
    def runout_flow(self) -> float:
        """Flow at which the rated-speed head curve crosses zero head."""
        return math.sqrt(self.h0 / self.c)


@dataclass(frozen=True)
class SystemCurveConfig:
    """Parametric form of the network's required-head curve.

    H_st = tank_level + c_d * demand
    k    = k0 / (1 + beta * demand)     (strictly decreasing in demand)
    """

    k0: float = 1e-4
    beta: float = 0.002
    c_d: float = 0.001

    def __post_init__(self):
        if self.k0 < 0 or self.beta < 0 or self.c_d < 0:
            raise ValueError("system-curve parameters must be nonnegative")


@dataclass(frozen=True)
class SystemCurve:
    """Required head vs flow: H(Q) = static_head + slope * Q**2."""

    static_head: float  # m
    slope: float        # m/(m^3/h)^2

    def __post_init__(self):
        if self.static_head < 0:
            raise ValueError(f"static head must be >= 0, got {self.static_head}")
        if self.slope < 0:
            raise ValueError(f"system-curve slope must be >= 0, got {self.slope}")

    def head_at(self, q: float) -> float:
        return self.static_head + self.slope * q * q


@dataclass(frozen=True)
class AckeretConfig:
    """Reynolds-number correction of the peak efficiency under speed change.

    (1 - eta_rated) / (1 - eta_scaled) = (1 - v) + v * speed**inv_alpha

    ``v=1, inv_alpha=0`` disables the correction (identity at every speed);
    at speed 1 the correction is always the identity.
    """

    v: float = 0.5
    inv_alpha: float = 0.2

    def __post_init__(self):
        if not 0 <= self.v <= 1:
            raise ValueError(f"Ackeret V must be in [0, 1], got {self.v}")
        if self.inv_alpha < 0:
            raise ValueError(f"Ackeret exponent must be >= 0, got {self.inv_alpha}")

    def corrected_peak(self, eta_rated: float, speed: float) -> float:
        denom = (1.0 - self.v) + self.v * speed**self.inv_alpha
        return 1.0 - (1.0 - eta_rated) / denom


DEFAULT_ACKERET = AckeretConfig()


@dataclass(frozen=True)
class TankState:
    """Shared elevated storage, tracked by geodetic level.

    Level is the height of the water surface above the pump station, so the
    usable band [min_level, max_level] maps to a fill of [0, 10] m.
    ``residual`` is the compensation term of the mass-balance summation; it
    keeps multi-day volume ledgers exact to a few ulp instead of drifting
    with the step count.
    """

    level: float            # m geodetic
    area: float = 1600.0    # m^2 (16000 m^3 over a 10 m band)
    min_level: float = 47.0
    max_level: float = 57.0
    residual: float = 0.0

    def __post_init__(self):
        if not self.min_level <= self.level <= self.max_level:
            raise ValueError(
                f"tank level {self.level} outside [{self.min_level}, {self.max_level}]"
            )
        if self.area <= 0:
            raise ValueError(f"tank area must be positive, got {self.area}")

    @property
    def volume(self) -> float:
        """Stored volume in m^3 above the empty mark."""
        return (self.level - self.min_level) * self.area


@dataclass(frozen=True)
class OperatingPoint:
    """Pump/system intersection: delivered flow, head, powers, efficiency."""

    q: float            # m^3/h
    head: float         # m
    p_hydraulic: float  # kW
    p_electric: float   # kW
    eta: float
    dead_headed: bool = False


DEAD_HEADED = OperatingPoint(q=0.0, head=0.0, p_hydraulic=0.0, p_electric=0.0,
                             eta=0.0, dead_headed=True)


def system_curve(tank_level: float, demand: float,
                 params: SystemCurveConfig) -> SystemCurve:
    """Build the current system curve from tank level and water demand.

    The static part follows the tank level plus a small demand term; the
    slope shrinks with demand (high demand lowers the pressure in the
    network, flattening the curve).
    """
    if demand < 0:
        raise ValueError(f"demand must be >= 0, got {demand}")
    if not 47.0 <= tank_level <= 57.0:
        raise ValueError(f"tank level {tank_level} outside [47, 57]")
    static = tank_level + params.c_d * demand
    slope = params.k0 / (1.0 + params.beta * demand)
    return SystemCurve(static_head=static, slope=slope)


def pump_head(pump: PumpModel, q: float, speed: float = 1.0) -> float:
    """Head delivered at flow ``q`` with the curve affinity-scaled to ``speed``.

    May be negative past runout; callers decide whether that matters.
    """
    if speed <= 0:
        raise ValueError(f"speed must be positive, got {speed}")
    if q < 0:
        raise ValueError(f"flow must be >= 0, got {q}")
    return speed * speed * pump.h0 - pump.c * q * q


def scale_curve(pump: PumpModel, speed: float) -> PumpModel:
    """Affinity-scale a pump to a new speed ratio.

    Every point (Q1, H1) of the original curve moves to (speed*Q1,
    speed^2*H1) along the parabola H = (H1/Q1^2)*Q^2; for the quadratic
    head curve that leaves the curvature unchanged.
    """
    if speed <= 0:
        raise ValueError(f"speed must be positive, got {speed}")
    return replace(pump, h0=speed * speed * pump.h0, q_bep=speed * pump.q_bep)


def efficiency_at(pump: PumpModel, q: float, speed: float = 1.0,
                  ackeret: AckeretConfig = DEFAULT_ACKERET) -> float:
    """Efficiency at flow ``q`` when the pump runs at ``speed``.

    The BEP moves along the affinity parabola (to speed*q_bep) and the peak
    value is Reynolds-corrected via the Ackeret relation.  Floored at zero.
    """
    if speed <= 0:
        raise ValueError(f"speed must be positive, got {speed}")
    if q < 0:
        raise ValueError(f"flow must be >= 0, got {q}")
    peak = ackeret.corrected_peak(pump.eta_bep, speed)
    dq = q - speed * pump.q_bep
    return max(0.0, peak - pump.eta_coeff * dq * dq)


def hydraulic_power(q: float, head: float, rho: float = WATER_DENSITY) -> float:
    """Hydraulic power in kW for flow in m^3/h and head in m."""
    if q < 0:
        raise ValueError(f"flow must be >= 0, got {q}")
    if head < 0:
        raise ValueError(f"head must be >= 0, got {head}")
    return q * rho * GRAVITY * head / 3.6e6


def electrical_power(p_hydraulic: float, eta: float) -> float:
    """Electrical power drawn to provide ``p_hydraulic``; zero stays zero."""
    if p_hydraulic == 0.0:
        return 0.0
    if not 0 < eta <= 1:
        raise ValueError(f"efficiency must be in (0, 1], got {eta}")
    return p_hydraulic / eta


def operating_point(pump: PumpModel, sys: SystemCurve, speed: float = 1.0,
                    rho: float = WATER_DENSITY,
                    ackeret: AckeretConfig = DEFAULT_ACKERET) -> OperatingPoint:
    """Intersect the (affinity-scaled) pump curve with the system curve.

    speed^2*h0 - c*q^2 = H_st + k*q^2  has the unique nonnegative root
    q = sqrt((speed^2*h0 - H_st) / (c + k)); when the scaled shutoff head
    cannot reach the static head the pump is dead-headed and delivers
    nothing (flagged, not an error: schedules may legitimately pick an
    undersized pump at high tank level).

    Requires a positive efficiency at the intersection whenever flow is
    delivered; a zero floor there means the efficiency curve is
    mis-calibrated for the reachable flow range.
    """
    if speed <= 0:
        raise ValueError(f"speed must be positive, got {speed}")
    shutoff = speed * speed * pump.h0
    if shutoff <= sys.static_head:
        return DEAD_HEADED
    q = math.sqrt((shutoff - sys.static_head) / (pump.c + sys.slope))
    head = sys.head_at(q)
    eta = efficiency_at(pump, q, speed, ackeret)
    p_h = hydraulic_power(q, head, rho)
    p_e = electrical_power(p_h, eta)
    return OperatingPoint(q=q, head=head, p_hydraulic=p_h, p_electric=p_e,
                          eta=eta, dead_headed=False)


def tank_update(tank: TankState, q_in: float, demand: float,
                dt: float = 1.0) -> tuple[TankState, bool, bool]:
    """Advance the tank mass balance by ``dt`` minutes.

    Returns (new state, overflow flag, empty flag); flags mark that the
    level was clamped at the respective bound this step.  Between clamps
    the level is a compensated sum of the increments, so mass is conserved
    over arbitrary horizons.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    delta = (q_in - demand) * (dt / 60.0) / tank.area
    adjusted = delta - tank.residual
    level = tank.level + adjusted
    residual = (level - tank.level) - adjusted
    overflow = level > tank.max_level
    empty = level < tank.min_level
    if overflow:
        level, residual = tank.max_level, 0.0
    elif empty:
        level, residual = tank.min_level, 0.0
    return replace(tank, level=level, residual=residual), overflow, empty


def fit_pump_curve(q: np.ndarray, head: np.ndarray) -> tuple[float, float]:
    """Least-squares fit of (h0, c) for H = h0 - c*Q^2 from operating data."""
    q = np.asarray(q, dtype=float)
    head = np.asarray(head, dtype=float)
    if q.size < 2:
        raise ValueError("need at least two samples to fit a head curve")
    design = np.column_stack([np.ones_like(q), -q * q])
    (h0, c), *_ = np.linalg.lstsq(design, head, rcond=None)
    return float(h0), float(c)


def fit_efficiency_curve(q: np.ndarray, eta: np.ndarray) -> tuple[float, float, float]:
    """Least-squares fit of (q_bep, eta_bep, eta_coeff) for the BEP parabola.

    Fits eta = a0 + a1*Q + a2*Q^2 and re-parameterises; requires a concave
    fit (a2 < 0) to be meaningful.
    """
    q = np.asarray(q, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if q.size < 3:
        raise ValueError("need at least three samples to fit an efficiency curve")
    design = np.column_stack([np.ones_like(q), q, q * q])
    (a0, a1, a2), *_ = np.linalg.lstsq(design, eta, rcond=None)
    if a2 >= 0:
        raise ValueError("efficiency samples are not concave in flow; cannot locate a BEP")
    coeff = -a2
    q_bep = a1 / (2.0 * coeff)
    eta_bep = a0 + coeff * q_bep * q_bep
    return float(q_bep), float(eta_bep), float(coeff)


def calibrate_pump(pump_id: str, q: np.ndarray, head: np.ndarray,
                   kw: np.ndarray, rho: float = WATER_DENSITY) -> PumpModel:
    """Fit a full PumpModel from logged (Q, H, kW electrical) columns.

    Efficiency samples are recovered as hydraulic power over electrical
    power; rows with zero flow or zero power are ignored.
    """
    q = np.asarray(q, dtype=float)
    head = np.asarray(head, dtype=float)
    kw = np.asarray(kw, dtype=float)
    mask = (q > 0) & (kw > 0)
    if mask.sum() < 3:
        raise ValueError("need at least three running samples to calibrate")
    q, head, kw = q[mask], head[mask], kw[mask]
    h0, c = fit_pump_curve(q, head)
    eta = q * rho * GRAVITY * head / 3.6e6 / kw
    q_bep, eta_bep, eta_coeff = fit_efficiency_curve(q, eta)
    return PumpModel(id=pump_id, h0=h0, c=c, q_bep=q_bep,
                     eta_bep=min(eta_bep, 1.0), eta_coeff=eta_coeff)
