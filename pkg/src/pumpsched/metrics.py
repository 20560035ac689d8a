"""Operation analytics: switch accounting, energy, tank profiles, reports.

A switch is one pump changing status, so replacing NP1 by NP2 counts two
(one stops, one starts); an alternative mode counts action changes as one
for sensitivity studies.
"""

from __future__ import annotations

import datetime as dt
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import TrajectoryRecord
from .env import Action, action_switch_delta

DEFAULT_QUANTILES = (0.1, 0.5, 0.9)


def count_switches(actions: Sequence[Action | str | int],
                   mode: str = "per_pump") -> int:
    """Total pump ON/OFF transitions over an action sequence.

    ``mode="per_pump"`` counts each pump's status changes (the default);
    ``mode="action"`` counts any change of action as one.
    """
    if len(actions) == 0:
        raise ValueError("action sequence must be nonempty")
    acts = [_coerce(a) for a in actions]
    if mode == "per_pump":
        return sum(action_switch_delta(a, b) for a, b in zip(acts, acts[1:]))
    if mode == "action":
        return sum(1 for a, b in zip(acts, acts[1:]) if a != b)
    raise ValueError(f"unknown switch-count mode {mode!r}")


def _coerce(a) -> Action:
    if isinstance(a, Action):
        return a
    if isinstance(a, str):
        return Action.from_name(a)
    return Action(int(a))


@dataclass
class OperationReport:
    """Aggregated statistics over a trajectory."""

    horizon_minutes: int = 0
    total_kwh: float = 0.0
    total_switches: int = 0
    daily_switches: dict[str, int] = field(default_factory=dict)
    monthly_kwh: dict[str, float] = field(default_factory=dict)
    tank_profile: dict[str, list[float]] = field(default_factory=dict)
    safety_violation_minutes: int = 0
    water_exchange_days: int = 0
    pump_usage_share: dict[str, float] = field(default_factory=dict)
    mean_reward: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "horizon_minutes": self.horizon_minutes,
            "total_kwh": self.total_kwh,
            "total_switches": self.total_switches,
            "daily_switches": self.daily_switches,
            "monthly_kwh": self.monthly_kwh,
            "tank_profile": self.tank_profile,
            "safety_violation_minutes": self.safety_violation_minutes,
            "water_exchange_days": self.water_exchange_days,
            "pump_usage_share": self.pump_usage_share,
            "mean_reward": self.mean_reward,
        }


def aggregate(trajectory: Sequence[TrajectoryRecord],
              quantiles: Iterable[float] = DEFAULT_QUANTILES,
              safety_level: float = 50.0,
              quality_level: float = 53.0) -> OperationReport:
    """Build the full report; an empty trajectory yields an empty report."""
    report = OperationReport()
    if not trajectory:
        return report
    report.horizon_minutes = len(trajectory)

    actions = [Action.from_name(r.action) for r in trajectory]
    report.total_switches = (count_switches(actions)
                             if len(actions) > 1 else 0)

    daily: dict[str, int] = defaultdict(int)
    prev = actions[0]
    for rec, act in zip(trajectory[1:], actions[1:]):
        daily[rec.timestamp.date().isoformat()] += action_switch_delta(prev, act)
        prev = act
    daily.setdefault(trajectory[0].timestamp.date().isoformat(), 0)
    report.daily_switches = dict(sorted(daily.items()))

    monthly: dict[str, float] = defaultdict(float)
    for rec in trajectory:
        monthly[rec.timestamp.strftime("%Y-%m")] += sum(rec.kw) / 60.0
    report.monthly_kwh = dict(sorted(monthly.items()))
    report.total_kwh = sum(monthly.values())

    by_minute: dict[int, list[float]] = defaultdict(list)
    min_level_by_day: dict[dt.date, float] = {}
    for rec in trajectory:
        by_minute[rec.minute_of_day].append(rec.tank_level)
        day = rec.timestamp.date()
        min_level_by_day[day] = min(min_level_by_day.get(day, rec.tank_level),
                                    rec.tank_level)
    qs = sorted(quantiles)
    profile: dict[str, list[float]] = {f"q{q:g}": [] for q in qs}
    for minute in sorted(by_minute):
        levels = np.asarray(by_minute[minute])
        for q in qs:
            profile[f"q{q:g}"].append(float(np.quantile(levels, q)))
    report.tank_profile = profile

    report.safety_violation_minutes = sum(
        1 for r in trajectory if r.tank_level < safety_level)
    report.water_exchange_days = sum(
        1 for level in min_level_by_day.values() if level < quality_level)

    running = [a for a in actions if a != Action.NOP]
    share = {a.name: 0.0 for a in Action if a != Action.NOP}
    if running:
        for a in running:
            share[a.name] += 1.0
        for k in share:
            share[k] /= len(running)
    report.pump_usage_share = share
    report.mean_reward = float(np.mean([r.reward for r in trajectory]))
    return report


def compare(report_a: OperationReport, report_b: OperationReport) -> dict:
    """Per-field absolute and percentage deltas (b relative to a)."""
    out: dict = {"fields": {}, "warnings": []}
    if report_a.horizon_minutes != report_b.horizon_minutes:
        out["warnings"].append(
            f"horizon mismatch: {report_a.horizon_minutes} vs "
            f"{report_b.horizon_minutes} minutes")

    scalar_fields = ("total_kwh", "total_switches",
                     "safety_violation_minutes", "water_exchange_days",
                     "mean_reward")
    for name in scalar_fields:
        a = float(getattr(report_a, name))
        b = float(getattr(report_b, name))
        delta = b - a
        pct = (delta / a * 100.0) if a != 0 else None
        out["fields"][name] = {"a": a, "b": b, "abs_delta": delta,
                               "pct_delta": pct}

    months = sorted(set(report_a.monthly_kwh) | set(report_b.monthly_kwh))
    monthly = {}
    for m in months:
        in_a, in_b = m in report_a.monthly_kwh, m in report_b.monthly_kwh
        if not (in_a and in_b):
            monthly[m] = {"missing_in": "a" if not in_a else "b"}
            continue
        a, b = report_a.monthly_kwh[m], report_b.monthly_kwh[m]
        monthly[m] = {"a": a, "b": b, "abs_delta": b - a,
                      "pct_delta": (b - a) / a * 100.0 if a else None}
    out["monthly_kwh"] = monthly
    return out


def profile_csv(report: OperationReport) -> str:
    """Plot-ready matrix: minute-of-day rows, one quantile per column."""
    keys = sorted(report.tank_profile)
    lines = ["minute," + ",".join(keys)]
    n = len(report.tank_profile.get(keys[0], [])) if keys else 0
    for i in range(n):
        lines.append(str(i) + "," +
                     ",".join(repr(report.tank_profile[k][i]) for k in keys))
    return "\n".join(lines) + "\n"


def monthly_csv(report: OperationReport) -> str:
    """Plot-ready matrix: month rows, kWh column."""
    lines = ["month,kwh"]
    for month, kwh in report.monthly_kwh.items():
        lines.append(f"{month},{kwh!r}")
    return "\n".join(lines) + "\n"
