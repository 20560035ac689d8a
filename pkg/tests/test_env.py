import math

import numpy as np
import pytest

from pumpsched.dataset import synthesize_demand
from pumpsched.env import (
    EPISODE_LENGTH,
    Action,
    Observation,
    RewardConfig,
    RewardContext,
    Transition,
    action_switch_delta,
    encode_observation,
    level_band_penalty,
    reward_v1,
    reward_v2,
)
from pumpsched.errors import ConfigError, StateError


def straight_line_reward(variant, action, prev, tr, level, wq, q, kw,
                         eq1_literal=False):
    """Independent transcription of the two reward procedures."""
    if variant == 1:
        omega_one = (prev == action) or (tr[action] == 0) or (action == Action.NOP)
    else:
        omega_one = (prev == action) or (tr[action] == 0)
    omega = 1.0 if omega_one else 30.0
    if 49.0 < level < 50.0:
        b = abs(level - 50.0)
    elif level <= 49.0 or level >= 57.0 - 1e-6:
        b = 1.0
    elif 50.0 <= level < 53.0 and not wq:
        b = -1.0
    else:
        b = 0.0
    log_term = math.log(1.0 / (tr[action] + omega))
    if action == Action.NOP:
        return -b * 10.0 + log_term
    if variant == 1:
        eff = math.exp(-kw / q) if eq1_literal else math.exp(-q / kw)
        return eff - b * 10.0 + log_term
    return -math.exp(-1.0 / kw) - b * 10.0 + log_term


# (name, variant, action, prev, time_running, level, wq, q, kw, eq1, frozen value)
REWARD_TABLE = [
    ("v1 first NOP", 1, Action(4), Action(4), (0, 0, 0, 0, 0), 55.0, False, 0.0, 0.0, False, 0.0),
    ("v1 same NP2", 1, Action(1), Action(1), (0, 120, 0, 0, 0), 54.0, False, 200.0, 40.0, False, -4.789052598597656),
    ("v1 switch NP1->NP3", 1, Action(2), Action(0), (0, 0, 50, 0, 0), 48.5, False, 120.0, 30.0, False, -14.363710995785148),
    ("v2 same NP2", 2, Action(1), Action(1), (0, 120, 0, 0, 0), 54.0, False, 200.0, 40.0, False, -5.771100457625074),
    ("v2 NOP after NOP", 2, Action(4), Action(4), (0, 0, 0, 0, 10), 55.0, False, 0.0, 0.0, False, -2.3978952727983707),
    ("v2 NOP fresh after NP1", 2, Action(4), Action(0), (30, 0, 0, 0, 0), 55.0, False, 0.0, 0.0, False, 0.0),
    ("v1 NOP clause exempts switch", 1, Action(4), Action(0), (30, 0, 0, 0, 7), 55.0, False, 0.0, 0.0, False, -2.0794415416798357),
    ("v2 NOP switch penalised", 2, Action(4), Action(0), (30, 0, 0, 0, 7), 55.0, False, 0.0, 0.0, False, -3.6109179126442243),
    ("v1 ramp B=0.5", 1, Action(1), Action(1), (0, 120, 0, 0, 0), 49.5, False, 200.0, 40.0, False, -9.789052598597657),
    ("v1 low band at 49", 1, Action(4), Action(4), (0, 0, 0, 0, 0), 49.0, False, 0.0, 0.0, False, -10.0),
    ("v1 full tank at 57", 1, Action(0), Action(0), (300, 0, 0, 0, 0), 57.0, False, 150.0, 35.0, False, -15.693346478015824),
    ("v1 exchange bonus B=-1", 1, Action(1), Action(1), (0, 60, 0, 0, 0), 51.0, False, 210.0, 42.0, False, 5.895864082825773),
    ("v1 quality already set", 1, Action(1), Action(1), (0, 60, 0, 0, 0), 51.0, True, 210.0, 42.0, False, -4.104135917174226),
    ("v1 at quality boundary 53", 1, Action(4), Action(4), (0, 0, 0, 0, 3), 53.0, False, 0.0, 0.0, False, -1.3862943611198906),
    ("v1 fresh pump exempts switch", 1, Action(2), Action(0), (80, 0, 0, 0, 0), 54.0, False, 160.0, 33.0, False, 0.00784024771761162),
    ("v2 switch NP1->NP3", 2, Action(2), Action(0), (0, 0, 50, 0, 0), 48.5, False, 120.0, 30.0, False, -15.349242735155887),
    ("v1 literal equation form", 1, Action(1), Action(1), (0, 120, 0, 0, 0), 54.0, False, 200.0, 40.0, True, -3.9770597925187596),
    ("v1 just above 49", 1, Action(4), Action(4), (0, 0, 0, 0, 0), 49.000001, False, 0.0, 0.0, False, -9.999990000000025),
    ("v1 just below 50", 1, Action(4), Action(4), (0, 0, 0, 0, 0), 49.999999, False, 0.0, 0.0, False, -9.999999974752427e-06),
    ("v1 at 50 quality unset", 1, Action(4), Action(4), (0, 0, 0, 0, 0), 50.0, False, 0.0, 0.0, False, 10.0),
]


@pytest.mark.parametrize("case", REWARD_TABLE, ids=[c[0] for c in REWARD_TABLE])
def test_reward_table(case):
    name, variant, action, prev, tr, level, wq, q, kw, eq1, frozen = case
    ctx = RewardContext(action=action, prev_action=prev, time_running=tr,
                        tank_level=level, water_quality=wq, q=q, kw=kw)
    cfg = RewardConfig(variant=f"v{variant}", eq1_literal=eq1)
    fn = reward_v1 if variant == 1 else reward_v2
    got = fn(ctx, cfg)
    assert got == pytest.approx(frozen, abs=1e-12)
    assert got == pytest.approx(
        straight_line_reward(variant, action, prev, tr, level, wq, q, kw, eq1),
        abs=1e-12)


def test_reward_random_cross_check():
    rng = np.random.default_rng(20)
    for _ in range(500):
        action = Action(int(rng.integers(0, 5)))
        prev = Action(int(rng.integers(0, 5)))
        tr = tuple(int(x) for x in rng.integers(0, 400, size=5))
        level = float(rng.uniform(47, 57))
        wq = bool(rng.integers(0, 2))
        q = float(rng.uniform(50, 300))
        kw = float(rng.uniform(10, 60))
        ctx = RewardContext(action, prev, tr, level, wq, q, kw)
        assert reward_v1(ctx) == pytest.approx(
            straight_line_reward(1, action, prev, tr, level, wq, q, kw), abs=1e-12)
        assert reward_v2(ctx, RewardConfig(variant="v2")) == pytest.approx(
            straight_line_reward(2, action, prev, tr, level, wq, q, kw), abs=1e-12)


def test_running_pump_with_zero_kw_is_config_error():
    ctx = RewardContext(Action.NP1, Action.NP1, (5, 0, 0, 0, 0), 54.0, False,
                        100.0, 0.0)
    with pytest.raises(ConfigError):
        reward_v1(ctx)
    with pytest.raises(ConfigError):
        reward_v2(ctx, RewardConfig(variant="v2"))


class TestBandTerm:
    cfg = RewardConfig()

    def test_documented_boundary_values(self):
        assert level_band_penalty(49.0, False, self.cfg) == 1.0
        assert level_band_penalty(49.0 + 1e-7, False, self.cfg) == pytest.approx(1.0, abs=1e-6)
        assert level_band_penalty(50.0 - 1e-7, False, self.cfg) == pytest.approx(0.0, abs=1e-6)
        assert level_band_penalty(50.0, False, self.cfg) == -1.0
        assert level_band_penalty(50.0, True, self.cfg) == 0.0
        assert level_band_penalty(53.0, False, self.cfg) == 0.0
        assert level_band_penalty(55.0, False, self.cfg) == 0.0
        assert level_band_penalty(57.0, False, self.cfg) == 1.0
        assert level_band_penalty(57.0 - 1e-9, False, self.cfg) == 1.0
        assert level_band_penalty(56.9, False, self.cfg) == 0.0
        assert level_band_penalty(48.0, False, self.cfg) == 1.0


class TestSwitchDelta:
    def test_cases(self):
        assert action_switch_delta(Action.NOP, Action.NOP) == 0
        assert action_switch_delta(Action.NP1, Action.NP1) == 0
        assert action_switch_delta(Action.NOP, Action.NP2) == 1
        assert action_switch_delta(Action.NP2, Action.NOP) == 1
        assert action_switch_delta(Action.NP1, Action.NP2) == 2


class TestEncoding:
    def make_obs(self, **kw):
        base = dict(tank_level=52.0, demand=120.0, minute_of_day=0, month=6,
                    prev_action=Action.NOP, time_running=(0, 0, 0, 0, 0),
                    water_quality=False)
        base.update(kw)
        return Observation(**base)

    def test_level_endpoints(self):
        assert encode_observation(self.make_obs(tank_level=47.0), 300.0)[0] == 0.0
        assert encode_observation(self.make_obs(tank_level=57.0), 300.0)[0] == 1.0

    def test_minute_periodicity(self):
        a = encode_observation(self.make_obs(minute_of_day=0), 300.0)
        b = encode_observation(self.make_obs(minute_of_day=1440 % 1440), 300.0)
        assert np.allclose(a[2:4], b[2:4])

    def test_one_hot(self):
        vec = encode_observation(self.make_obs(prev_action=Action.NP3), 300.0)
        onehot = vec[6:11]
        assert onehot.sum() == 1.0
        assert onehot[int(Action.NP3)] == 1.0

    def test_length_and_quality_bit(self):
        vec = encode_observation(self.make_obs(water_quality=True), 300.0)
        assert vec.shape == (17,)
        assert vec[16] == 1.0


class TestTransition:
    def test_rejects_nonfinite_reward(self):
        with pytest.raises(ValueError):
            Transition(obs=np.zeros(17), action=0, reward=float("nan"),
                       next_obs=np.zeros(17), terminal=False)


@pytest.fixture
def env(config):
    return config.make_env()


@pytest.fixture
def three_days():
    return synthesize_demand(3, seed=13)


class TestEnvLifecycle:
    def test_reset_zeroes_accumulators(self, env, day_demand):
        obs = env.reset(52.0, day_demand)
        assert obs.time_running == (0, 0, 0, 0, 0)
        assert obs.prev_action == Action.NOP
        assert not obs.water_quality
        assert obs.tank_level == 52.0

    def test_reset_rejects_out_of_range_level(self, env, day_demand):
        with pytest.raises(ValueError):
            env.reset(46.9, day_demand)

    def test_reset_deterministic(self, config, day_demand):
        a = config.make_env().reset(52.0, day_demand)
        b = config.make_env().reset(52.0, day_demand)
        assert a == b

    def test_step_before_reset(self, env):
        with pytest.raises(StateError):
            env.step(Action.NOP)

    def test_nop_with_zero_demand_holds_level(self, config):
        env = config.make_env()
        env.reset(52.0, [0.0] * 10, start_minute=0, month=6)
        obs, reward, info = env.step(Action.NOP)
        assert obs.tank_level == 52.0
        assert info["q"] == 0.0
        assert info["kw"] == 0.0

    def test_pumping_beyond_demand_raises_level(self, env, day_demand):
        env.reset(52.0, day_demand)
        obs, _, info = env.step(Action.NP2)
        assert info["q"] > info["demand"]
        assert obs.tank_level > 52.0

    def test_time_running_tracks_all_actions(self, env, day_demand):
        env.reset(52.0, day_demand)
        for a in [Action.NP1, Action.NP1, Action.NOP, Action.NP2]:
            obs, _, _ = env.step(a)
        assert obs.time_running == (2, 1, 0, 0, 1)

    def test_minute_arithmetic(self, env, three_days):
        env.reset(52.0, three_days)
        for _ in range(100):
            obs, _, _ = env.step(Action.NOP)
        assert obs.minute_of_day == 100
        assert sum(obs.time_running) == 100

    def test_water_quality_monotone_within_episode(self, config):
        env = config.make_env()
        env.reset(53.05, [120.0] * 200, start_minute=0, month=6)
        seen_true = False
        for _ in range(200):
            obs, _, _ = env.step(Action.NOP)
            if seen_true:
                assert obs.water_quality
            seen_true = obs.water_quality
        assert seen_true  # draining past 53 must set the flag

    def test_exhausted_demand_raises(self, config):
        env = config.make_env()
        env.reset(52.0, [100.0] * 5, start_minute=0, month=6)
        for _ in range(5):
            env.step(Action.NOP)
        with pytest.raises(StateError):
            env.step(Action.NOP)

    def test_step_deterministic(self, config, day_demand):
        def run():
            env = config.make_env()
            env.reset(52.0, day_demand)
            out = []
            for i in range(50):
                obs, r, info = env.step(Action.NP2 if i % 7 else Action.NOP)
                out.append((obs, r, info["kw"]))
            return out

        assert run() == run()


class TestEpisodeSemantics:
    def test_boundaries_and_rollover(self, config, three_days):
        env = config.make_env()
        env.reset(53.5, three_days)
        boundary_steps = []
        levels = {}
        for i in range(1, 3 * EPISODE_LENGTH + 1):
            obs, _, info = env.step(Action.NP2 if obs_needs_pump(env) else Action.NOP)
            if info["episode_end"]:
                boundary_steps.append(i)
                levels[i] = obs.tank_level
            if i in (EPISODE_LENGTH + 1, 2 * EPISODE_LENGTH + 1):
                # first step of the new episode: accumulators were re-zeroed
                assert sum(obs.time_running) == 1
                assert not obs.water_quality or obs.tank_level < 53.0
        assert boundary_steps == [EPISODE_LENGTH, 2 * EPISODE_LENGTH,
                                  3 * EPISODE_LENGTH]

    def test_level_continuous_across_boundary(self, config, three_days):
        env = config.make_env()
        env.reset(53.5, three_days)
        for _ in range(EPISODE_LENGTH):
            obs, _, _ = env.step(Action.NP2)
        level_at_boundary = obs.tank_level
        obs2, _, _ = env.step(Action.NP2)
        # one further minute of pumping moved the level from exactly where it was
        assert abs(obs2.tank_level - level_at_boundary) < 0.01
        assert obs2.time_running == (0, 1, 0, 0, 0)

    def test_sum_time_running_mod_episode(self, config, three_days):
        env = config.make_env()
        env.reset(53.5, three_days)
        for i in range(1, 2000):
            obs, _, _ = env.step(Action.NOP)
        assert sum(obs.time_running) == 1999 % EPISODE_LENGTH


def obs_needs_pump(env) -> bool:
    return env.tank_level < 53.2
