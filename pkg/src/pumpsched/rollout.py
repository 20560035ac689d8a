"""Driving the simulator with a schedule and collecting trajectories.

A policy here is any callable ``(Observation, step_index) -> Action``;
constant schedules, the hysteresis band rule, recorded behavioral
schedules and greedy checkpoint policies all reduce to that shape.
"""

from __future__ import annotations

import datetime as dt
from typing import Callable, Sequence

from .agent import REMAgent
from .config import AppConfig, RuleConfig
from .dataset import (
    EpisodeSlice,
    SensorRecord,
    TrajectoryRecord,
    behavioral_action,
)
from .env import Action, Observation, PumpSchedulingEnv, Transition
from .errors import ValidationError

Policy = Callable[[Observation, int], Action]


def constant_policy(action: Action) -> Policy:
    return lambda obs, step: action


def band_rule_policy(rule: RuleConfig) -> Policy:
    """Hysteresis: engage the day's pump below the low mark, release above
    the high mark; the pump rotates through the configured list day by day."""
    state = {"on": False}

    def policy(obs: Observation, step: int) -> Action:
        day = step // 1440
        pump = Action.from_name(rule.rotation[day % len(rule.rotation)])
        if obs.tank_level <= rule.low_level:
            state["on"] = True
        elif obs.tank_level >= rule.high_level:
            state["on"] = False
        return pump if state["on"] else Action.NOP

    return policy


def behavioral_policy(records: Sequence[SensorRecord]) -> Policy:
    actions = [behavioral_action(r) for r in records]

    def policy(obs: Observation, step: int) -> Action:
        return actions[step]

    return policy


def agent_policy(agent: REMAgent, demand_max: float) -> Policy:
    from .env import encode_observation

    def policy(obs: Observation, step: int) -> Action:
        return Action(int(agent.predict(encode_observation(obs, demand_max))))

    return policy


def trajectory_record(timestamp: dt.datetime, action: Action, reward: float,
                      info: dict) -> TrajectoryRecord:
    """Build one export row from a step's outputs.

    The row carries the pre-step tank level and the demand consumed by the
    step, so replaying the file reproduces the same trajectory exactly.
    """
    kw = [0.0, 0.0, 0.0, 0.0]
    flow = [0.0, 0.0, 0.0, 0.0]
    if action != Action.NOP:
        kw[int(action)] = info["kw"]
        flow[int(action)] = info["q"]
    return TrajectoryRecord(
        timestamp=timestamp,
        demand=info["demand"],
        tank_level=info["level_before"],
        kw=tuple(kw),
        flow=tuple(flow),
        action=action.name,
        reward=reward,
        water_quality=info["water_quality"],
    )


def run_policy(env: PumpSchedulingEnv, policy: Policy, steps: int,
               start: dt.datetime) -> tuple[list[TrajectoryRecord], list[Transition]]:
    """Advance a reset environment ``steps`` minutes under ``policy``.

    Returns the export rows and the encoded transitions (for offline
    learning); the environment must already be reset.
    """
    rows: list[TrajectoryRecord] = []
    transitions: list[Transition] = []
    obs = env.observation()
    for i in range(steps):
        action = policy(obs, i)
        encoded = env.encode(obs)
        next_obs, reward, info = env.step(action)
        rows.append(trajectory_record(start + dt.timedelta(minutes=i),
                                      action, reward, info))
        transitions.append(Transition(
            obs=encoded, action=int(action), reward=reward,
            next_obs=env.encode(next_obs), terminal=info["episode_end"]))
        obs = next_obs
    return rows, transitions


def simulate(config: AppConfig, demand: Sequence[SensorRecord],
             policy: Policy, steps: int | None = None,
             initial_level: float | None = None
             ) -> tuple[list[TrajectoryRecord], list[Transition]]:
    """Reset a fresh environment on a demand trace and run a policy."""
    env = config.make_env()
    steps = len(demand) if steps is None else steps
    if steps > len(demand):
        raise ValidationError(
            f"horizon of {steps} minutes exceeds the demand trace "
            f"({len(demand)} minutes); extend the trace or shorten the run")
    level = config.env.initial_level if initial_level is None else initial_level
    env.reset(level, demand)
    return run_policy(env, policy, steps, demand[0].timestamp)


def replay_episodes(config: AppConfig, episodes: Sequence[EpisodeSlice]
                    ) -> list[Transition]:
    """Re-enact recorded operation through the simulator to harvest
    transitions.

    Each contiguous run of day slices is stepped without interruption
    (the day boundary only clears the episode accumulators); the recorded
    tank level seeds the run's initial condition, and the recorded power
    columns supply the behavioral actions.
    """
    transitions: list[Transition] = []
    run: list[EpisodeSlice] = []
    for ep in episodes:
        if run and ep.start_index != run[-1].start_index + len(run[-1].records):
            transitions.extend(_replay_run(config, run))
            run = []
        run.append(ep)
    if run:
        transitions.extend(_replay_run(config, run))
    return transitions


def _replay_run(config: AppConfig, run: list[EpisodeSlice]) -> list[Transition]:
    records = [r for ep in run for r in ep.records]
    env = config.make_env()
    level = min(max(records[0].tank_level, config.tank.min_level),
                config.tank.max_level)
    env.reset(level, records)
    _, transitions = run_policy(env, behavioral_policy(records),
                                len(records), records[0].timestamp)
    return transitions
