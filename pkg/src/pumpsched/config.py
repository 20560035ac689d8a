"""Configuration loading and validation.

One JSON document configures everything: pump curves, system-curve and
tank parameters, environment/reward settings, the synthetic demand
profile, replay and training knobs, and the session service.  The file is
validated against the JSON Schema shipped in ``pumpsched/data/`` before
any dataclass is built.  The packaged default is used when no path is
given and the ``PUMPSCHED_CONFIG`` environment variable is unset.

The pump coefficients in the default file are calibration placeholders:
they honour the size ordering NP1 > NP2 > NP3 > NP4, every pump lifts
against a full tank, and electrical powers land in plausible tens-of-kW
ranges.  Fit real coefficients with :func:`pumpsched.hydraulics.calibrate_pump`.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .agent import TrainConfig
from .dataset import DemandProfileConfig
from .env import PumpSchedulingEnv, RewardConfig
from .errors import ConfigError
from .hydraulics import AckeretConfig, PumpModel, SystemCurveConfig

ENV_VAR = "PUMPSCHED_CONFIG"


@dataclass(frozen=True)
class TankConfig:
    area: float = 1600.0
    min_level: float = 47.0
    max_level: float = 57.0

    def __post_init__(self):
        if self.min_level >= self.max_level:
            raise ConfigError("tank min_level must lie below max_level")


@dataclass(frozen=True)
class EnvSettings:
    """Environment-level knobs that are not reward parameters."""

    demand_max: float = 300.0
    dt_minutes: float = 1.0
    rho: float = 1000.0
    initial_level: float = 53.5


@dataclass(frozen=True)
class RuleConfig:
    """Built-in hysteresis schedule: run the day's pump below the low mark,
    stop above the high mark, rotating pumps day by day."""

    low_level: float = 52.8
    high_level: float = 54.0
    rotation: tuple[str, ...] = ("NP2", "NP1", "NP2", "NP3", "NP2", "NP4")

    def __post_init__(self):
        if self.low_level >= self.high_level:
            raise ConfigError("rule low_level must lie below high_level")
        if not self.rotation:
            raise ConfigError("rule rotation must name at least one pump")


@dataclass(frozen=True)
class ReplayConfig:
    capacity: int = 100_000
    alpha: float = 0.6
    eps: float = 1e-3


@dataclass(frozen=True)
class ServiceConfig:
    session_ttl_seconds: float = 3600.0
    export_dir: str | None = None
    minutes_per_second: float = 1.0


@dataclass(frozen=True)
class AppConfig:
    pumps: tuple[PumpModel, ...]
    system: SystemCurveConfig = SystemCurveConfig()
    tank: TankConfig = TankConfig()
    ackeret: AckeretConfig = AckeretConfig()
    reward: RewardConfig = RewardConfig()
    env: EnvSettings = EnvSettings()
    demand: DemandProfileConfig = DemandProfileConfig()
    rule: RuleConfig = RuleConfig()
    replay: ReplayConfig = ReplayConfig()
    train: TrainConfig = TrainConfig()
    service: ServiceConfig = ServiceConfig()
    source: str = "<default>"

    def make_env(self) -> PumpSchedulingEnv:
        return PumpSchedulingEnv(
            pumps=self.pumps,
            system=self.system,
            reward=self.reward,
            tank_area=self.tank.area,
            min_level=self.tank.min_level,
            max_level=self.tank.max_level,
            demand_max=self.env.demand_max,
            dt=self.env.dt_minutes,
            rho=self.env.rho,
            ackeret=self.ackeret,
        )


def _schema() -> dict:
    text = resources.files("pumpsched.data").joinpath("config_schema.json").read_text()
    return json.loads(text)


def default_config_dict() -> dict:
    text = resources.files("pumpsched.data").joinpath("default_config.json").read_text()
    return json.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def config_from_dict(doc: dict, source: str = "<dict>") -> AppConfig:
    """Validate a raw JSON document and build the typed configuration.

    Values omitted from the document fall back to the packaged defaults.
    """
    merged = _merge(default_config_dict(), doc)
    try:
        jsonschema.validate(merged, _schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{source}: {exc.message} (at "
                          f"{'/'.join(str(p) for p in exc.absolute_path)})") from exc

    try:
        pumps = tuple(PumpModel(**p) for p in merged["pumps"])
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    ids = [p.id for p in pumps]
    if ids != ["NP1", "NP2", "NP3", "NP4"]:
        raise ConfigError(f"{source}: pumps must be NP1..NP4 in order, got {ids}")
    beps = [p.q_bep for p in pumps]
    if not (beps[0] > beps[1] > beps[2] > beps[3]):
        raise ConfigError(
            f"{source}: pump sizes must order NP1 > NP2 > NP3 > NP4 in q_bep, "
            f"got {beps}")

    env_doc = dict(merged.get("env", {}))
    reward = RewardConfig(
        variant=env_doc.pop("reward", "v1"),
        psi=env_doc.pop("psi", 10.0),
        omega_switch=env_doc.pop("omega_switch", 30.0),
        omega_base=env_doc.pop("omega_base", 1.0),
        level_low=env_doc.pop("level_low", 49.0),
        level_safe=env_doc.pop("level_safe", 50.0),
        level_quality=env_doc.pop("level_quality", 53.0),
        level_top=env_doc.pop("level_top", 57.0),
        eq1_literal=env_doc.pop("eq1_literal", False),
    )
    train_doc = dict(merged.get("train", {}))
    if "hidden" in train_doc:
        train_doc["hidden"] = tuple(train_doc["hidden"])
    rule_doc = dict(merged.get("rule", {}))
    if "rotation" in rule_doc:
        rule_doc["rotation"] = tuple(rule_doc["rotation"])

    try:
        return AppConfig(
            pumps=pumps,
            system=SystemCurveConfig(**merged.get("system", {})),
            tank=TankConfig(**merged.get("tank", {})),
            ackeret=AckeretConfig(**merged.get("ackeret", {})),
            reward=reward,
            env=EnvSettings(**env_doc),
            demand=DemandProfileConfig(**merged.get("demand", {})),
            rule=RuleConfig(**rule_doc),
            replay=ReplayConfig(**merged.get("replay", {})),
            train=TrainConfig(**train_doc),
            service=ServiceConfig(**merged.get("service", {})),
            source=source,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: str | Path | None = None) -> AppConfig:
    """Load a configuration file, or the ``PUMPSCHED_CONFIG`` fallback, or
    the packaged defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return config_from_dict({}, source="<default>")
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(doc, source=str(path))
