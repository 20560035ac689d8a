"""Pump-scheduling testbed: simulator, POMDP environment, offline RL."""

__version__ = "0.1.0"

from .agent import REMAgent, TrainConfig
from .config import AppConfig, load_config
from .dataset import (
    DemandProfileConfig,
    EpisodeSlice,
    SensorRecord,
    behavioral_action,
    parse_log,
    slice_episodes,
    synthesize_demand,
)
from .env import (
    Action,
    Observation,
    PumpSchedulingEnv,
    RewardConfig,
    Transition,
    encode_observation,
    reward_v1,
    reward_v2,
)
from .hydraulics import (
    OperatingPoint,
    PumpModel,
    SystemCurve,
    SystemCurveConfig,
    TankState,
    operating_point,
    system_curve,
    tank_update,
)
from .metrics import OperationReport, aggregate, compare, count_switches
from .replay import PrioritizedBuffer

__all__ = [
    "__version__",
    "Action",
    "AppConfig",
    "DemandProfileConfig",
    "EpisodeSlice",
    "Observation",
    "OperatingPoint",
    "OperationReport",
    "PrioritizedBuffer",
    "PumpModel",
    "PumpSchedulingEnv",
    "REMAgent",
    "RewardConfig",
    "SensorRecord",
    "SystemCurve",
    "SystemCurveConfig",
    "TankState",
    "TrainConfig",
    "Transition",
    "aggregate",
    "behavioral_action",
    "compare",
    "count_switches",
    "encode_observation",
    "load_config",
    "operating_point",
    "parse_log",
    "reward_v1",
    "reward_v2",
    "slice_episodes",
    "synthesize_demand",
    "system_curve",
    "tank_update",
]
