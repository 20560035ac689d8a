"""Episodic reset-free decision process for pump scheduling.

One step is one minute of plant operation: the chosen pump (or none) is
intersected with the current system curve, the tank mass balance advances,
and a dense reward is computed.  Episodes are fixed 1440-step windows over
one continuous trajectory; at a boundary the per-episode accumulators
(running times, water-quality flag, previous action) are cleared while the
physical tank level carries over unchanged.

Two reward variants are provided.  Both combine an efficiency term, a
tank-level band penalty ``B`` scaled by ``psi``, and a log term that decays
with the chosen action's cumulative running time, where the ``omega``
offset jumps from 1 to 30 on a pump switch.  They differ in the efficiency
term (``exp(-Q/kW)`` vs ``-exp(-1/kW)``) and in whether choosing NOP is
exempt from the switch penalty.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, StateError
from .hydraulics import (
    DEFAULT_ACKERET,
    AckeretConfig,
    OperatingPoint,
    PumpModel,
    SystemCurveConfig,
    TankState,
    operating_point,
    system_curve,
    tank_update,
)

EPISODE_LENGTH = 1440  # one day of 1-minute steps
OBSERVATION_DIM = 17


class Action(enum.IntEnum):
    """Discrete action set: run exactly one pump, or none."""

    NP1 = 0
    NP2 = 1
    NP3 = 2
    NP4 = 3
    NOP = 4

    @classmethod
    def from_name(cls, name: str) -> "Action":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown action {name!r}; expected one of "
                             f"{[a.name for a in cls]}") from None


PUMP_ACTIONS = (Action.NP1, Action.NP2, Action.NP3, Action.NP4)


def action_switch_delta(prev: Action, cur: Action) -> int:
    """Number of individual pump ON/OFF transitions between two actions.

    Staying put is 0, NOP<->pump is 1, pump<->different pump is 2 (one
    stops, one starts).
    """
    if prev == cur:
        return 0
    if prev == Action.NOP or cur == Action.NOP:
        return 1
    return 2


@dataclass(frozen=True)
class Observation:
    """What the operator (or agent) sees after a step."""

    tank_level: float
    demand: float
    minute_of_day: int          # [0, 1439]
    month: int                  # [1, 12]
    prev_action: Action
    time_running: tuple[int, int, int, int, int]  # minutes per action, NOP included
    water_quality: bool         # True once the level dipped below the quality line


@dataclass(frozen=True)
class RewardConfig:
    """Reward tunables; both variants share the B-band and psi/omega values."""

    variant: str = "v1"           # "v1" or "v2"
    psi: float = 10.0
    omega_switch: float = 30.0
    omega_base: float = 1.0
    level_low: float = 49.0       # at or below: B = 1
    level_safe: float = 50.0      # safety line (3 m fill); reported, not enforced
    level_quality: float = 53.0   # below: water exchange happened
    level_top: float = 57.0       # "full tank" penalty line
    top_eps: float = 1e-6         # treats level >= top - eps as full
    eq1_literal: bool = False     # use exp(-kW/Q) instead of exp(-Q/kW) in v1

    def __post_init__(self):
        if self.variant not in ("v1", "v2"):
            raise ConfigError(f"unknown reward variant {self.variant!r}")
        if self.psi <= 0:
            raise ConfigError("psi must be positive")
        if not self.omega_switch > self.omega_base >= 1:
            raise ConfigError("need omega_switch > omega_base >= 1")


@dataclass(frozen=True)
class RewardContext:
    """Inputs to the reward: the step's action pair, pre-step running times,
    the post-step tank level, the pre-step water-quality flag, and the
    delivered flow / electrical power."""

    action: Action
    prev_action: Action
    time_running: Sequence[float]
    tank_level: float
    water_quality: bool
    q: float
    kw: float


def level_band_penalty(level: float, water_quality: bool,
                       cfg: RewardConfig) -> float:
    """The piecewise band term B.

    Near-empty band (49, 50) ramps 0..1; at or below 49, or at the very top,
    B = 1; the first excursion into [50, 53) earns B = -1 (a bonus for
    providing water exchange, available only while the quality flag is still
    unset); anywhere else B = 0.
    """
    if cfg.level_low < level < cfg.level_safe:
        return abs(level - cfg.level_safe)
    if level <= cfg.level_low or level >= cfg.level_top - cfg.top_eps:
        return 1.0
    if cfg.level_safe <= level < cfg.level_quality and not water_quality:
        return -1.0
    return 0.0


def _omega(ctx: RewardContext, cfg: RewardConfig, nop_exempt: bool) -> float:
    same = ctx.action == ctx.prev_action
    fresh = ctx.time_running[ctx.action] == 0
    if same or fresh or (nop_exempt and ctx.action == Action.NOP):
        return cfg.omega_base
    return cfg.omega_switch


def _check_running(ctx: RewardContext):
    if ctx.action != Action.NOP and ctx.kw <= 0:
        raise ConfigError(
            f"{ctx.action.name} is running but draws {ctx.kw} kW; pump curves "
            "must yield positive electrical power whenever flow is delivered")


def reward_v1(ctx: RewardContext, cfg: RewardConfig = RewardConfig()) -> float:
    """First reward variant: efficiency term exp(-Q/kW); NOP never counts
    as a switch."""
    _check_running(ctx)
    omega = _omega(ctx, cfg, nop_exempt=True)
    b = level_band_penalty(ctx.tank_level, ctx.water_quality, cfg)
    run_log = math.log(1.0 / (ctx.time_running[ctx.action] + omega))
    if ctx.action == Action.NOP:
        return -b * cfg.psi + run_log
    if cfg.eq1_literal:
        eff = math.exp(-ctx.kw / ctx.q) if ctx.q > 0 else 0.0
    else:
        eff = math.exp(-ctx.q / ctx.kw)
    return eff - b * cfg.psi + run_log


def reward_v2(ctx: RewardContext, cfg: RewardConfig = RewardConfig()) -> float:
    """Second reward variant: efficiency term -exp(-1/kW); switching to NOP
    is penalised like any other switch."""
    _check_running(ctx)
    omega = _omega(ctx, cfg, nop_exempt=False)
    b = level_band_penalty(ctx.tank_level, ctx.water_quality, cfg)
    run_log = math.log(1.0 / (ctx.time_running[ctx.action] + omega))
    if ctx.action == Action.NOP:
        return -b * cfg.psi + run_log
    return -math.exp(-1.0 / ctx.kw) - b * cfg.psi + run_log


REWARD_FUNCTIONS = {"v1": reward_v1, "v2": reward_v2}


def encode_observation(obs: Observation, demand_max: float) -> np.ndarray:
    """Fixed 17-feature vector: level and demand normalised, minute and
    month as sin/cos pairs, previous action one-hot, running times scaled
    by the episode length, and the water-quality bit."""
    vec = np.empty(OBSERVATION_DIM)
    vec[0] = (obs.tank_level - 47.0) / 10.0
    vec[1] = obs.demand / demand_max
    minute_angle = 2.0 * math.pi * obs.minute_of_day / EPISODE_LENGTH
    vec[2] = math.sin(minute_angle)
    vec[3] = math.cos(minute_angle)
    month_angle = 2.0 * math.pi * obs.month / 12.0
    vec[4] = math.sin(month_angle)
    vec[5] = math.cos(month_angle)
    vec[6:11] = 0.0
    vec[6 + int(obs.prev_action)] = 1.0
    vec[11:16] = np.asarray(obs.time_running, dtype=float) / EPISODE_LENGTH
    vec[16] = 1.0 if obs.water_quality else 0.0
    return vec


@dataclass(frozen=True)
class Transition:
    """One encoded step for the offline learner; ``terminal`` only marks
    the episode-boundary bookkeeping, never a reset of the plant."""

    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminal: bool

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise ValueError(f"non-finite reward {self.reward}")


class PumpSchedulingEnv:
    """Minute-stepped plant simulation with reset-free episode windows.

    The demand source fixed at :meth:`reset` may be a plain sequence of
    demands (with ``start_minute`` and ``month`` supplied) or a sequence of
    sensor records carrying timestamps, in which case minute-of-day and
    month follow the records.
    """

    def __init__(self, pumps: Sequence[PumpModel],
                 system: SystemCurveConfig = SystemCurveConfig(),
                 reward: RewardConfig = RewardConfig(),
                 tank_area: float = 1600.0,
                 min_level: float = 47.0,
                 max_level: float = 57.0,
                 demand_max: float = 300.0,
                 dt: float = 1.0,
                 rho: float = 1000.0,
                 ackeret: AckeretConfig = DEFAULT_ACKERET,
                 episode_length: int = EPISODE_LENGTH):
        if len(pumps) != 4:
            raise ConfigError(f"expected 4 pumps, got {len(pumps)}")
        self.pumps = {Action[p.id]: p for p in pumps}
        self.system = system
        self.reward_config = reward
        self._reward_fn = REWARD_FUNCTIONS[reward.variant]
        self.tank_area = tank_area
        self.min_level = min_level
        self.max_level = max_level
        self.demand_max = demand_max
        self.dt = dt
        self.rho = rho
        self.ackeret = ackeret
        self.episode_length = episode_length
        self._tank: TankState | None = None

    # -- episode control ---------------------------------------------------

    def reset(self, initial_level: float, demand_source,
              start_minute: int = 0, month: int = 1) -> Observation:
        """Start a fresh trajectory; clears every per-episode accumulator."""
        if not self.min_level <= initial_level <= self.max_level:
            raise ValueError(
                f"initial level {initial_level} outside "
                f"[{self.min_level}, {self.max_level}]")
        self._load_demand(demand_source, start_minute, month)
        self._tank = TankState(level=initial_level, area=self.tank_area,
                               min_level=self.min_level, max_level=self.max_level)
        self._step_count = 0
        self._episode = 0
        self._clear_episode_accumulators()
        self._cum_kwh = 0.0
        self._cum_switches = 0
        return self.observation()

    def _load_demand(self, source, start_minute: int, month: int):
        if not hasattr(source, "__len__") or len(source) == 0:
            raise ValueError("demand source must be a nonempty sequence")
        first = source[0]
        if hasattr(first, "demand") and hasattr(first, "timestamp"):
            self._demand = np.array([r.demand for r in source], dtype=float)
            self._minutes = np.array(
                [r.timestamp.hour * 60 + r.timestamp.minute for r in source],
                dtype=int)
            self._months = np.array([r.timestamp.month for r in source], dtype=int)
        else:
            self._demand = np.asarray(source, dtype=float)
            n = len(self._demand)
            self._minutes = (int(start_minute) + np.arange(n)) % EPISODE_LENGTH
            self._months = np.full(n, int(month), dtype=int)
        if np.any(self._demand < 0):
            raise ValueError("demand trace contains negative values")

    def _clear_episode_accumulators(self):
        self._time_running = np.zeros(len(Action), dtype=int)
        self._water_quality = False
        self._prev_action = Action.NOP

    # -- stepping ------------------------------------------------------------

    def step(self, action: Action | int | str) -> tuple[Observation, float, dict]:
        if self._tank is None:
            raise StateError("step() before reset()")
        action = self._coerce_action(action)
        if self._step_count >= len(self._demand):
            raise StateError(
                f"demand trace exhausted after {self._step_count} steps")

        # lazy rollover: episode k+1 starts with cleared accumulators
        if self._step_count > 0 and self._step_count % self.episode_length == 0:
            self._clear_episode_accumulators()
            self._episode += 1

        demand = float(self._demand[self._step_count])
        level_before = self._tank.level
        sys = system_curve(level_before, demand, self.system)
        op = self._operating_point(action, sys)

        new_tank, overflow, empty = tank_update(self._tank, op.q, demand, self.dt)

        ctx = RewardContext(
            action=action,
            prev_action=self._prev_action,
            time_running=tuple(self._time_running),
            tank_level=new_tank.level,
            water_quality=self._water_quality,
            q=op.q,
            kw=op.p_electric,
        )
        reward = self._reward_fn(ctx, self.reward_config)

        switched = action != self._prev_action
        switch_delta = action_switch_delta(self._prev_action, action)
        self._cum_switches += switch_delta
        self._cum_kwh += op.p_electric * self.dt / 60.0

        self._time_running[action] += 1
        self._water_quality = (self._water_quality
                               or new_tank.level < self.reward_config.level_quality)
        self._prev_action = action
        self._tank = new_tank
        self._step_count += 1
        episode_end = self._step_count % self.episode_length == 0

        info = {
            "switch": switched,
            "switch_delta": switch_delta,
            "kw": op.p_electric,
            "q": op.q,
            "head": op.head,
            "eta": op.eta,
            "dead_headed": op.dead_headed,
            "overflow": overflow,
            "empty": empty,
            "safety_violation": new_tank.level < self.reward_config.level_safe,
            "episode_end": episode_end,
            "episode": self._episode,
            "step": self._step_count,
            "demand": demand,
            "level_before": level_before,
            "level_after": new_tank.level,
            "water_quality": self._water_quality,
            "cumulative_kwh": self._cum_kwh,
            "cumulative_switches": self._cum_switches,
        }
        return self.observation(), reward, info

    def _coerce_action(self, action) -> Action:
        if isinstance(action, Action):
            return action
        if isinstance(action, str):
            return Action.from_name(action)
        return Action(int(action))

    def _operating_point(self, action: Action, sys) -> OperatingPoint:
        if action == Action.NOP:
            return OperatingPoint(q=0.0, head=0.0, p_hydraulic=0.0,
                                  p_electric=0.0, eta=0.0, dead_headed=False)
        op = operating_point(self.pumps[action], sys, rho=self.rho,
                             ackeret=self.ackeret)
        if op.dead_headed or op.p_electric <= 0:
            raise ConfigError(
                f"{action.name} cannot deliver against static head "
                f"{sys.static_head:.2f} m; calibrate pump curves so every "
                "pump lifts across the full tank range")
        return op

    # -- views ---------------------------------------------------------------

    def observation(self) -> Observation:
        """Current view of the plant (what the next action will see)."""
        k = min(self._step_count, len(self._demand) - 1)
        return Observation(
            tank_level=self._tank.level,
            demand=float(self._demand[k]),
            minute_of_day=int(self._minutes[k]),
            month=int(self._months[k]),
            prev_action=self._prev_action,
            time_running=tuple(int(t) for t in self._time_running),
            water_quality=self._water_quality,
        )

    def encode(self, obs: Observation) -> np.ndarray:
        return encode_observation(obs, self.demand_max)

    @property
    def tank_level(self) -> float:
        if self._tank is None:
            raise StateError("environment not reset")
        return self._tank.level

    @property
    def step_count(self) -> int:
        return self._step_count

    @property
    def cumulative_kwh(self) -> float:
        return self._cum_kwh

    @property
    def cumulative_switches(self) -> int:
        return self._cum_switches
