"""Minute-resolution operation logs: parsing, validation, slicing, synthesis.

The canonical file format is comma-separated text with ISO-8601 minute
timestamps:

    timestamp,demand,tank_level,kw_np1,kw_np2,kw_np3,kw_np4[,q_np1..q_np4]

Trajectory exports append ``action,reward,water_quality`` so recorded
demonstrations re-enter this pipeline unchanged.  Timestamps must be
strictly increasing; small gaps can be forward-filled, longer ones
invalidate the enclosing day when slicing into episodes.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence, TextIO

import numpy as np

from .env import EPISODE_LENGTH, Action
from .errors import SchemaError, ValidationError

REQUIRED_COLUMNS = ("timestamp", "demand", "tank_level",
                    "kw_np1", "kw_np2", "kw_np3", "kw_np4")
FLOW_COLUMNS = ("q_np1", "q_np2", "q_np3", "q_np4")
TRAJECTORY_COLUMNS = REQUIRED_COLUMNS + FLOW_COLUMNS + ("action", "reward",
                                                        "water_quality")

KW_ON_TOLERANCE = 0.1  # kW; sensor noise below this counts as OFF
MAX_FILL_MINUTES = 5   # longest gap that forward-filling may bridge

MINUTE = dt.timedelta(minutes=1)


class ParallelOperationWarning(UserWarning):
    """More than one pump drew power in a record; kept, resolved to max-kW."""


@dataclass(frozen=True)
class SensorRecord:
    """One minute of plant telemetry."""

    timestamp: dt.datetime
    demand: float
    tank_level: float
    kw: tuple[float, float, float, float]
    flow: tuple[float, float, float, float] | None = None

    @property
    def minute_of_day(self) -> int:
        return self.timestamp.hour * 60 + self.timestamp.minute


@dataclass(frozen=True)
class TrajectoryRecord(SensorRecord):
    """A sensor record augmented with the acting policy's outputs."""

    action: str = "NOP"
    reward: float = 0.0
    water_quality: bool = False


@dataclass(frozen=True)
class EpisodeSlice:
    """Exactly one day (1440 contiguous minutes) of records."""

    records: tuple[SensorRecord, ...]
    start_index: int

    def __post_init__(self):
        if len(self.records) != EPISODE_LENGTH:
            raise ValueError(f"episode must hold {EPISODE_LENGTH} records, "
                             f"got {len(self.records)}")

    @property
    def date(self) -> dt.date:
        return self.records[0].timestamp.date()


@dataclass
class SliceReport:
    """What slicing kept and dropped."""

    episodes: int = 0
    dropped_leading: int = 0
    dropped_trailing: int = 0
    excluded_days: list[tuple[dt.date, str]] = None

    def __post_init__(self):
        if self.excluded_days is None:
            self.excluded_days = []


def _parse_timestamp(text: str) -> dt.datetime:
    ts = dt.datetime.fromisoformat(text.strip())
    return ts.replace(second=0, microsecond=0)


def parse_log(source: TextIO | str | Iterable[str],
              aliases: dict[str, str] | None = None) -> list[SensorRecord]:
    """Parse a CSV operation log into typed records.

    Raises SchemaError when required columns are missing and
    ValidationError (with 1-based line numbers) for malformed rows or
    non-monotonic timestamps.  Extra columns (e.g. trajectory exports)
    are tolerated and ignored here.  ``aliases`` maps canonical column
    names to the headers actually present, as a thin adapter for
    externally published files whose columns are named differently
    (units must already agree: m3/h, m geodetic, kW).
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty input: no header row") from None
    header = [h.strip() for h in header]
    names = aliases or {}
    missing = [c for c in REQUIRED_COLUMNS if names.get(c, c) not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    col = {c: header.index(names.get(c, c))
           for c in REQUIRED_COLUMNS + FLOW_COLUMNS
           if names.get(c, c) in header}
    has_flow = all(c in col for c in FLOW_COLUMNS)

    records: list[SensorRecord] = []
    problems: list[tuple[int, str]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            ts = _parse_timestamp(row[col["timestamp"]])
            demand = float(row[col["demand"]])
            level = float(row[col["tank_level"]])
            kw = tuple(float(row[col[f"kw_np{i}"]]) for i in range(1, 5))
            flow = (tuple(float(row[col[c]]) for c in FLOW_COLUMNS)
                    if has_flow else None)
        except (ValueError, IndexError) as exc:
            problems.append((lineno, f"malformed row: {exc}"))
            continue
        if demand < 0:
            problems.append((lineno, f"negative demand {demand}"))
            continue
        records.append(SensorRecord(timestamp=ts, demand=demand,
                                    tank_level=level, kw=kw, flow=flow))
    if problems:
        detail = "; ".join(f"line {n}: {msg}" for n, msg in problems[:20])
        raise ValidationError(
            f"{len(problems)} malformed row(s): {detail}",
            lines=[n for n, _ in problems])

    bad_order: list[tuple[int, int]] = []
    for i in range(1, len(records)):
        if records[i].timestamp <= records[i - 1].timestamp:
            bad_order.append((i + 1, i + 2))  # header is line 1
    if bad_order:
        pairs = ", ".join(f"lines {a}/{b}" for a, b in bad_order[:20])
        raise ValidationError(
            f"timestamps not strictly increasing at {pairs}",
            lines=sorted({n for pair in bad_order for n in pair}))
    return records


def _format_float(x: float) -> str:
    return repr(float(x))


def write_log(records: Sequence[SensorRecord], sink: TextIO):
    """Serialise records in the canonical schema (flow columns included
    whenever the first record carries them)."""
    has_flow = bool(records) and records[0].flow is not None
    columns = REQUIRED_COLUMNS + (FLOW_COLUMNS if has_flow else ())
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(columns)
    for r in records:
        row = [r.timestamp.strftime("%Y-%m-%dT%H:%M"),
               _format_float(r.demand), _format_float(r.tank_level),
               *(_format_float(v) for v in r.kw)]
        if has_flow:
            row.extend(_format_float(v) for v in (r.flow or (0, 0, 0, 0)))
        writer.writerow(row)


def write_trajectory(records: Sequence[TrajectoryRecord], sink: TextIO):
    """Serialise a policy trajectory (export schema)."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for r in records:
        flow = r.flow or (0.0, 0.0, 0.0, 0.0)
        writer.writerow([
            r.timestamp.strftime("%Y-%m-%dT%H:%M"),
            _format_float(r.demand), _format_float(r.tank_level),
            *(_format_float(v) for v in r.kw),
            *(_format_float(v) for v in flow),
            r.action, _format_float(r.reward), int(r.water_quality),
        ])


def parse_trajectory(source: TextIO | str) -> list[TrajectoryRecord]:
    """Parse a trajectory export (the dataset schema plus action, reward
    and water-quality columns)."""
    if isinstance(source, str):
        source = io.StringIO(source)
    text = source.read()
    reader = csv.DictReader(io.StringIO(text))
    fields = reader.fieldnames or []
    for c in ("action", "reward", "water_quality"):
        if c not in fields:
            raise SchemaError(f"missing trajectory column {c!r}")
    base = parse_log(io.StringIO(text))
    out: list[TrajectoryRecord] = []
    for rec, row in zip(base, csv.DictReader(io.StringIO(text))):
        out.append(TrajectoryRecord(
            timestamp=rec.timestamp, demand=rec.demand,
            tank_level=rec.tank_level, kw=rec.kw, flow=rec.flow,
            action=Action.from_name(row["action"]).name,
            reward=float(row["reward"]),
            water_quality=row["water_quality"].strip() in ("1", "True", "true"),
        ))
    return out


def behavioral_action(record: SensorRecord,
                      tolerance: float = KW_ON_TOLERANCE) -> Action:
    """Recover the operator's action from the power columns.

    A pump counts as ON when its kW exceeds the noise tolerance; with no
    pump on the action is NOP.  Simultaneous pumps collapse to the max-kW
    one with a ParallelOperationWarning (the single-pump action space
    cannot express parallel operation).
    """
    kw = np.asarray(record.kw, dtype=float)
    on = kw > tolerance
    n_on = int(on.sum())
    if n_on == 0:
        return Action.NOP
    if n_on > 1:
        warnings.warn(
            f"{record.timestamp:%Y-%m-%dT%H:%M}: {n_on} pumps drawing power "
            f"simultaneously {tuple(kw)}; using max-kW pump",
            ParallelOperationWarning, stacklevel=2)
    return Action(int(np.argmax(kw)))


def repair_gaps(records: Sequence[SensorRecord],
                max_fill: int = MAX_FILL_MINUTES
                ) -> tuple[list[SensorRecord], list[tuple[dt.datetime, int]]]:
    """Forward-fill missing minutes up to ``max_fill``; report longer gaps.

    Returns the repaired list and the gaps left open as (timestamp of the
    record before the gap, missing-minute count).
    """
    if not records:
        return [], []
    repaired: list[SensorRecord] = [records[0]]
    open_gaps: list[tuple[dt.datetime, int]] = []
    for rec in records[1:]:
        prev = repaired[-1]
        missing = int((rec.timestamp - prev.timestamp) / MINUTE) - 1
        if 0 < missing <= max_fill:
            for i in range(1, missing + 1):
                repaired.append(replace(prev, timestamp=prev.timestamp + i * MINUTE))
        elif missing > max_fill:
            open_gaps.append((prev.timestamp, missing))
        repaired.append(rec)
    return repaired, open_gaps


def slice_episodes(records: Sequence[SensorRecord],
                   offset_minutes: int = 0
                   ) -> tuple[list[EpisodeSlice], SliceReport]:
    """Cut the log into day-long episodes aligned to local midnight
    (plus an optional offset).

    Windows with missing minutes are excluded and reported; the leading
    partial day and the trailing remainder are dropped with counts.
    Consecutive kept windows over a contiguous log share their boundary
    minute, so trajectories can be stepped across them reset-free.
    """
    report = SliceReport()
    slices: list[EpisodeSlice] = []
    n = len(records)
    i = 0
    while i < n and records[i].minute_of_day != offset_minutes % EPISODE_LENGTH:
        i += 1
    report.dropped_leading = i
    while i < n:
        if n - i < EPISODE_LENGTH:
            report.dropped_trailing = n - i
            break
        window = records[i:i + EPISODE_LENGTH]
        gap_at = _first_discontinuity(window)
        if gap_at is None:
            slices.append(EpisodeSlice(records=tuple(window), start_index=i))
            i += EPISODE_LENGTH
        else:
            day = window[0].timestamp.date()
            report.excluded_days.append(
                (day, f"gap after minute {gap_at} of the day"))
            # resume at the next midnight present in the log
            i += gap_at + 1
            while i < n and records[i].minute_of_day != offset_minutes % EPISODE_LENGTH:
                i += 1
    report.episodes = len(slices)
    return slices, report


def _first_discontinuity(window: Sequence[SensorRecord]) -> int | None:
    for j in range(1, len(window)):
        if window[j].timestamp - window[j - 1].timestamp != MINUTE:
            return j - 1
    return None


@dataclass(frozen=True)
class DemandProfileConfig:
    """Shape of the synthetic consumption trace: a daily double peak with
    seasonal modulation and bounded noise."""

    mean: float = 120.0                  # m^3/h
    daily_amplitude: float = 0.35        # first harmonic (24 h period)
    secondary_amplitude: float = 0.30    # second harmonic (12 h period)
    daily_phase_minutes: float = 420.0
    secondary_phase_minutes: float = 240.0
    seasonal_amplitude: float = 0.15     # multiplicative, normalised per horizon
    noise_amplitude: float = 8.0         # uniform +/- bound, m^3/h
    start: str = "2021-01-01T00:00"
    placeholder_level: float = 53.5      # tank column value in demand-only traces

    def __post_init__(self):
        if self.mean <= 0:
            raise ValueError("mean demand must be positive")
        if self.daily_amplitude + self.secondary_amplitude >= 1.0:
            raise ValueError("harmonic amplitudes must sum below 1 to keep demand positive")


def synthesize_demand(days: int, seed: int,
                      profile: DemandProfileConfig = DemandProfileConfig()
                      ) -> list[SensorRecord]:
    """Generate a desk-scale demand trace, deterministic per seed.

    The seasonal factor is constant within each day and normalised to unit
    mean over the horizon, so the generated mean tracks the configured
    mean.  Tank level is a constant placeholder and all kW columns are
    zero; use the CLI's synth command to overlay a schedule.
    """
    if days < 1:
        raise ValueError(f"days must be >= 1, got {days}")
    rng = np.random.default_rng(seed)
    start = dt.datetime.fromisoformat(profile.start)
    n = days * EPISODE_LENGTH

    minute = np.arange(n) % EPISODE_LENGTH
    day_index = np.arange(n) // EPISODE_LENGTH
    day_of_year = np.array([
        (start + dt.timedelta(days=int(d))).timetuple().tm_yday
        for d in range(days)])
    season_day = 1.0 + profile.seasonal_amplitude * np.sin(
        2.0 * np.pi * (day_of_year - 100) / 365.25)
    season_day /= season_day.mean()
    season = season_day[day_index]

    intraday = (1.0
                + profile.daily_amplitude * np.sin(
                    2.0 * np.pi * (minute - profile.daily_phase_minutes) / EPISODE_LENGTH)
                + profile.secondary_amplitude * np.sin(
                    4.0 * np.pi * (minute - profile.secondary_phase_minutes) / EPISODE_LENGTH))
    noise = rng.uniform(-profile.noise_amplitude, profile.noise_amplitude, size=n)
    demand = np.maximum(0.0, profile.mean * season * intraday + noise)

    return [SensorRecord(timestamp=start + i * MINUTE,
                         demand=float(demand[i]),
                         tank_level=profile.placeholder_level,
                         kw=(0.0, 0.0, 0.0, 0.0))
            for i in range(n)]
