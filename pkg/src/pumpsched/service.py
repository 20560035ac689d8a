"""Interactive session backend for human operation of the simulated plant.

HTTP surface:

    GET  /health                    -> {"v": 1, "status": "ok", "version": ...}
    POST /sessions                  -> "created" message with the initial state
    GET  /sessions                  -> session listing
    GET  /sessions/{id}/export      -> trajectory CSV (dataset schema + action columns)

A persistent bidirectional channel at ``/sessions/{id}/stream`` carries
JSON wire messages.  The client sends ``{"v": 1, "kind": "act",
"action": "NP2"}``; every act is answered by exactly one ``state`` (plus
an ``episode_end`` notice at day boundaries) or one ``error``.  In timed
mode a server clock advances the plant at a configured rate with the last
commanded action latched, streaming states as they happen.

Sessions are isolated: an internal failure in one marks only that session
broken.  Idle sessions expire after a TTL; expiry (and server shutdown)
flushes recorded steps to the export directory.
"""

from __future__ import annotations

import asyncio
import datetime as dt
import io
import secrets
import time
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, PlainTextResponse

from . import __version__
from .config import AppConfig, load_config
from .dataset import TrajectoryRecord, synthesize_demand, write_trajectory
from .env import Action, Observation
from .errors import PumpschedError
from .rollout import trajectory_record

WIRE_VERSION = 1


def _observation_payload(obs: Observation) -> dict:
    return {
        "tank_level": obs.tank_level,
        "demand": obs.demand,
        "minute_of_day": obs.minute_of_day,
        "month": obs.month,
        "prev_action": obs.prev_action.name,
        "time_running": list(obs.time_running),
        "water_quality": obs.water_quality,
    }


def _error_message(text: str) -> dict:
    return {"v": WIRE_VERSION, "kind": "error", "message": text}


class Session:
    """One operator's live plant: an env, its recording, and a lock that
    serialises acts so the observable sequence is the sequential env
    semantics regardless of client timing."""

    def __init__(self, session_id: str, config: AppConfig, scenario: dict):
        self.id = session_id
        self.config = config
        self.lock = asyncio.Lock()
        self.created = time.monotonic()
        self.last_active = self.created
        self.rows: list[TrajectoryRecord] = []
        self.broken: str | None = None
        self.flushed_to: str | None = None
        self.watchers: set[WebSocket] = set()
        self.ticker: asyncio.Task | None = None

        demand_spec = scenario.get("demand", {})
        days = int(demand_spec.get("days", 2))
        seed = int(demand_spec.get("seed", 0))
        profile = config.demand
        if "mean" in demand_spec:
            import dataclasses
            profile = dataclasses.replace(profile, mean=float(demand_spec["mean"]))
        self.records = synthesize_demand(days, seed, profile)
        self.start = self.records[0].timestamp

        clock = scenario.get("clock", {})
        self.clock_mode = clock.get("mode", "manual")
        if self.clock_mode not in ("manual", "timed"):
            raise ValueError(f"unknown clock mode {self.clock_mode!r}")
        self.minutes_per_second = float(
            clock.get("minutes_per_second", config.service.minutes_per_second))
        if self.minutes_per_second <= 0:
            raise ValueError("minutes_per_second must be positive")
        self.latched_action = Action.NOP

        import dataclasses
        reward_variant = scenario.get("reward", config.reward.variant)
        cfg = dataclasses.replace(
            config, reward=dataclasses.replace(config.reward,
                                               variant=reward_variant))
        self.env = cfg.make_env()
        level = float(scenario.get("initial_level", config.env.initial_level))
        self.env.reset(level, self.records)
        self.last_reward = 0.0
        self.last_info: dict = {}
        self.reward_sum = 0.0

    # All stepping funnels through here (manual acts and timed ticks alike).
    def apply(self, action: Action) -> tuple[dict, bool]:
        obs, reward, info = self.env.step(action)
        self.rows.append(trajectory_record(
            self.start + dt.timedelta(minutes=self.env.step_count - 1),
            action, reward, info))
        self.last_reward = reward
        self.last_info = info
        self.reward_sum += reward
        self.latched_action = action
        self.last_active = time.monotonic()
        return self.state_message(), info["episode_end"]

    def state_message(self) -> dict:
        info = self.last_info
        return {
            "v": WIRE_VERSION,
            "kind": "state",
            "session_id": self.id,
            "step": self.env.step_count,
            "episode": info.get("episode", 0),
            "observation": _observation_payload(self.env.observation()),
            "reward": self.last_reward,
            "info": {
                "switch": info.get("switch", False),
                "kw": info.get("kw", 0.0),
                "q": info.get("q", 0.0),
                "head": info.get("head", 0.0),
                "overflow": info.get("overflow", False),
                "empty": info.get("empty", False),
                "safety_violation": info.get("safety_violation", False),
                "episode_end": info.get("episode_end", False),
            },
            "totals": {
                "kwh": self.env.cumulative_kwh,
                "switches": self.env.cumulative_switches,
                "reward_sum": self.reward_sum,
            },
        }

    def summary(self) -> dict:
        return {
            "session_id": self.id,
            "steps": self.env.step_count,
            "clock_mode": self.clock_mode,
            "broken": self.broken,
            "idle_seconds": round(time.monotonic() - self.last_active, 3),
        }

    def export_csv(self) -> str:
        sink = io.StringIO()
        write_trajectory(self.rows, sink)
        return sink.getvalue()


class SessionManager:
    def __init__(self, config: AppConfig):
        self.config = config
        self.sessions: dict[str, Session] = {}
        self.ttl = config.service.session_ttl_seconds
        self.export_dir = (Path(config.service.export_dir)
                           if config.service.export_dir else None)

    def create(self, scenario: dict) -> Session:
        session = Session(secrets.token_hex(8), self.config, scenario)
        self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        return self.sessions.get(session_id)

    def flush(self, session: Session):
        if not session.rows or self.export_dir is None or session.flushed_to:
            return
        self.export_dir.mkdir(parents=True, exist_ok=True)
        path = self.export_dir / f"session-{session.id}.csv"
        path.write_text(session.export_csv())
        session.flushed_to = str(path)

    def expire_idle(self) -> list[str]:
        """Drop sessions idle beyond the TTL, flushing their recordings."""
        now = time.monotonic()
        expired = [sid for sid, s in self.sessions.items()
                   if now - s.last_active > self.ttl]
        for sid in expired:
            session = self.sessions.pop(sid)
            if session.ticker:
                session.ticker.cancel()
            self.flush(session)
        return expired

    def shutdown(self):
        for session in self.sessions.values():
            if session.ticker:
                session.ticker.cancel()
            self.flush(session)


async def _tick_loop(session: Session):
    """Timed clock: advance the plant with the latched action, streaming
    the resulting states to every connected watcher."""
    interval = 1.0 / session.minutes_per_second
    try:
        while session.broken is None:
            await asyncio.sleep(interval)
            async with session.lock:
                try:
                    message, boundary = session.apply(session.latched_action)
                except PumpschedError as exc:
                    session.broken = str(exc)
                    message, boundary = _error_message(str(exc)), False
            dead = []
            for ws in session.watchers:
                try:
                    await ws.send_json(message)
                    if boundary:
                        await ws.send_json({
                            "v": WIRE_VERSION, "kind": "episode_end",
                            "session_id": session.id,
                            "episode": message["episode"]})
                except Exception:
                    dead.append(ws)
            for ws in dead:
                session.watchers.discard(ws)
    except asyncio.CancelledError:
        pass


async def _sweeper(manager: SessionManager):
    try:
        while True:
            await asyncio.sleep(min(manager.ttl / 4, 30.0))
            manager.expire_idle()
    except asyncio.CancelledError:
        pass


def create_app(config: AppConfig | None = None) -> FastAPI:
    config = config or load_config()
    manager = SessionManager(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        sweeper = asyncio.create_task(_sweeper(manager))
        yield
        sweeper.cancel()
        manager.shutdown()

    app = FastAPI(title="pumpsched operator service", lifespan=lifespan)
    app.state.manager = manager

    @app.get("/health")
    async def health():
        return {"v": WIRE_VERSION, "status": "ok", "version": __version__,
                "sessions": len(manager.sessions)}

    @app.post("/sessions")
    async def create_session(scenario: dict | None = None):
        try:
            session = manager.create(scenario or {})
        except (ValueError, PumpschedError) as exc:
            return JSONResponse(_error_message(str(exc)), status_code=400)
        if session.clock_mode == "timed":
            session.ticker = asyncio.create_task(_tick_loop(session))
        return {
            "v": WIRE_VERSION,
            "kind": "created",
            "session_id": session.id,
            "clock_mode": session.clock_mode,
            "minutes_per_second": session.minutes_per_second,
            "reward_variant": session.env.reward_config.variant,
            "state": {
                "observation": _observation_payload(session.env.observation()),
                "totals": {"kwh": 0.0, "switches": 0, "reward_sum": 0.0},
            },
        }

    @app.get("/sessions")
    async def list_sessions():
        return {"v": WIRE_VERSION, "sessions":
                [s.summary() for s in manager.sessions.values()]}

    @app.get("/sessions/{session_id}/export")
    async def export_session(session_id: str):
        session = manager.get(session_id)
        if session is None:
            return JSONResponse(_error_message("unknown session"), status_code=404)
        if not session.rows:
            return JSONResponse(_error_message("session has no steps to export"),
                                status_code=409)
        async with session.lock:  # snapshot under the step lock
            csv_text = session.export_csv()
        return PlainTextResponse(csv_text, media_type="text/csv", headers={
            "Content-Disposition":
                f'attachment; filename="session-{session_id}.csv"'})

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(ws: WebSocket, session_id: str):
        session = manager.get(session_id)
        await ws.accept()
        if session is None:
            await ws.send_json(_error_message("unknown session"))
            await ws.close()
            return
        session.watchers.add(ws)
        await ws.send_json(session.state_message()
                           if session.env.step_count else {
                               "v": WIRE_VERSION, "kind": "state",
                               "session_id": session.id, "step": 0,
                               "episode": 0,
                               "observation": _observation_payload(
                                   session.env.observation()),
                               "reward": 0.0, "info": {},
                               "totals": {"kwh": 0.0, "switches": 0,
                                          "reward_sum": 0.0}})
        try:
            while True:
                try:
                    payload = await ws.receive_json()
                except ValueError:
                    await ws.send_json(_error_message("malformed JSON message"))
                    continue
                kind = payload.get("kind")
                if kind != "act":
                    await ws.send_json(_error_message(
                        f"unsupported message kind {kind!r}"))
                    continue
                if session.broken:
                    await ws.send_json(_error_message(
                        f"session is broken: {session.broken}"))
                    continue
                if session.clock_mode == "timed":
                    # timed sessions only latch; the clock does the stepping
                    try:
                        session.latched_action = Action.from_name(
                            str(payload.get("action")))
                        session.last_active = time.monotonic()
                    except ValueError as exc:
                        await ws.send_json(_error_message(str(exc)))
                    continue
                try:
                    action = Action.from_name(str(payload.get("action")))
                except ValueError as exc:
                    await ws.send_json(_error_message(str(exc)))
                    continue
                async with session.lock:
                    try:
                        message, boundary = session.apply(action)
                    except PumpschedError as exc:
                        session.broken = str(exc)
                        await ws.send_json(_error_message(str(exc)))
                        continue
                    except Exception as exc:  # fault isolation: only this session dies
                        session.broken = f"{type(exc).__name__}: {exc}"
                        await ws.send_json(_error_message(session.broken))
                        continue
                await ws.send_json(message)
                if boundary:
                    await ws.send_json({"v": WIRE_VERSION, "kind": "episode_end",
                                        "session_id": session.id,
                                        "episode": message["episode"]})
        except WebSocketDisconnect:
            pass
        finally:
            session.watchers.discard(ws)

    return app
