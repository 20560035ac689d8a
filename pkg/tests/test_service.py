import time

import pytest
from fastapi.testclient import TestClient

from pumpsched.cli import main as cli_main
from pumpsched.config import load_config
from pumpsched.dataset import behavioral_action, parse_log, parse_trajectory
from pumpsched.service import create_app


@pytest.fixture
def client(tmp_path):
    import dataclasses
    config = load_config()
    config = dataclasses.replace(
        config, service=dataclasses.replace(config.service,
                                            export_dir=str(tmp_path / "exports")))
    app = create_app(config)
    with TestClient(app) as client:
        yield client


def create_session(client, **scenario):
    response = client.post("/sessions", json=scenario)
    assert response.status_code == 200, response.text
    return response.json()


class TestHttpSurface:
    def test_health_reports_version(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert body["v"] == 1
        assert body["version"]

    def test_create_returns_initial_state(self, client):
        body = create_session(client, initial_level=52.0)
        assert body["kind"] == "created"
        obs = body["state"]["observation"]
        assert obs["tank_level"] == 52.0
        assert obs["time_running"] == [0, 0, 0, 0, 0]
        assert obs["water_quality"] is False

    def test_two_creates_are_distinct(self, client):
        a = create_session(client)
        b = create_session(client)
        assert a["session_id"] != b["session_id"]

    def test_bad_level_rejected_without_session(self, client):
        response = client.post("/sessions", json={"initial_level": 60.0})
        assert response.status_code == 400
        assert response.json()["kind"] == "error"
        assert client.get("/sessions").json()["sessions"] == []

    def test_created_session_listed(self, client):
        body = create_session(client)
        listed = client.get("/sessions").json()["sessions"]
        assert [s["session_id"] for s in listed] == [body["session_id"]]

    def test_export_unknown_session_404(self, client):
        assert client.get("/sessions/deadbeef/export").status_code == 404

    def test_export_empty_session_is_error(self, client):
        sid = create_session(client)["session_id"]
        assert client.get(f"/sessions/{sid}/export").status_code == 409


def act(ws, action):
    ws.send_json({"v": 1, "kind": "act", "action": action})
    while True:
        message = ws.receive_json()
        if message["kind"] in ("state", "error"):
            return message


class TestStream:
    def test_act_state_round_trip(self, client):
        sid = create_session(client, initial_level=52.0)["session_id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            assert ws.receive_json()["kind"] == "state"  # snapshot on connect
            msg = act(ws, "NP2")
            assert msg["kind"] == "state"
            assert msg["step"] == 1
            assert msg["info"]["kw"] > 0
            assert msg["totals"]["switches"] == 1

    def test_every_act_answered_exactly_once(self, client):
        sid = create_session(client)["session_id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()
            for i in range(5):
                msg = act(ws, "NOP")
                assert msg["step"] == i + 1

    def test_malformed_action_leaves_env_untouched(self, client):
        sid = create_session(client)["session_id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()
            msg = act(ws, "NP9")
            assert msg["kind"] == "error"
            follow = act(ws, "NOP")
            assert follow["step"] == 1  # the bad act did not advance the clock

    def test_unknown_kind_is_error(self, client):
        sid = create_session(client)["session_id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()
            ws.send_json({"v": 1, "kind": "ping"})
            assert ws.receive_json()["kind"] == "error"

    def test_unknown_session_stream_errors(self, client):
        with client.websocket_connect("/sessions/nope/stream") as ws:
            assert ws.receive_json()["kind"] == "error"

    def test_nop_at_zero_demand_is_stationary(self, client, monkeypatch):
        # a NOP act simply advances one minute; level falls only by demand
        sid = create_session(client, initial_level=52.0)["session_id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            first = ws.receive_json()
            msg = act(ws, "NOP")
            assert msg["observation"]["tank_level"] <= first["observation"]["tank_level"]
            assert msg["info"]["kw"] == 0.0

    def test_switch_totals_accumulate(self, client):
        sid = create_session(client)["session_id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()
            assert act(ws, "NP1")["totals"]["switches"] == 1
            assert act(ws, "NP2")["totals"]["switches"] == 3  # NP1 off + NP2 on
            assert act(ws, "NP2")["totals"]["switches"] == 3

    def test_fault_isolation_between_sessions(self, client):
        sid_a = create_session(client)["session_id"]
        sid_b = create_session(client)["session_id"]
        manager = client.app.state.manager
        broken = manager.get(sid_a)

        def boom(action):
            raise RuntimeError("induced failure")

        broken.env.step = boom
        with client.websocket_connect(f"/sessions/{sid_a}/stream") as ws:
            ws.receive_json()
            assert act(ws, "NOP")["kind"] == "error"
        with client.websocket_connect(f"/sessions/{sid_b}/stream") as ws:
            ws.receive_json()
            assert act(ws, "NOP")["kind"] == "state"
        assert manager.get(sid_a).broken
        assert manager.get(sid_b).broken is None


class TestEpisodeBoundary:
    def test_act_after_episode_end_continues_reset_free(self, client):
        sid = create_session(client, initial_level=53.5,
                             demand={"days": 2, "seed": 1})["session_id"]
        manager = client.app.state.manager
        session = manager.get(sid)
        # fast-forward to one step before the boundary server-side
        for _ in range(1439):
            session.apply(session.env._coerce_action("NP2"))
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()
            ws.send_json({"v": 1, "kind": "act", "action": "NP2"})
            state = ws.receive_json()
            assert state["info"]["episode_end"] is True
            assert ws.receive_json()["kind"] == "episode_end"
            level_at_boundary = state["observation"]["tank_level"]
            nxt = act(ws, "NP2")
            assert nxt["observation"]["time_running"][1] == 1  # accumulators cleared
            assert abs(nxt["observation"]["tank_level"] - level_at_boundary) < 0.01


class TestExport:
    def test_export_round_trips_and_inverts(self, client):
        sid = create_session(client, initial_level=52.5)["session_id"]
        sent = ["NP1", "NP1", "NOP", "NP2", "NP2", "NP3", "NOP", "NP4"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()
            for action in sent:
                assert act(ws, action)["kind"] == "state"
        response = client.get(f"/sessions/{sid}/export")
        assert response.status_code == 200
        text = response.text
        assert sid in response.headers["content-disposition"]
        rows = parse_trajectory(text)
        assert len(rows) == len(sent)
        assert [r.action for r in rows] == sent
        # the power columns alone recover the operator's actions
        assert [behavioral_action(r).name for r in parse_log(text)] == sent

    def test_export_row_count_matches_steps(self, client):
        sid = create_session(client)["session_id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()
            for _ in range(10):
                act(ws, "NOP")
        rows = parse_trajectory(client.get(f"/sessions/{sid}/export").text)
        assert len(rows) == 10


class TestTimedMode:
    def test_clock_advances_without_acts(self, client):
        body = create_session(client, clock={"mode": "timed",
                                             "minutes_per_second": 50})
        sid = body["session_id"]
        manager = client.app.state.manager
        deadline = time.time() + 5.0
        while time.time() < deadline:
            if manager.get(sid).env.step_count >= 2:
                break
            time.sleep(0.05)
        assert manager.get(sid).env.step_count >= 2

    def test_act_latches_action(self, client):
        sid = create_session(client, clock={"mode": "timed",
                                            "minutes_per_second": 50})["session_id"]
        manager = client.app.state.manager
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()
            ws.send_json({"v": 1, "kind": "act", "action": "NP3"})
            deadline = time.time() + 5.0
            while time.time() < deadline:
                if manager.get(sid).latched_action.name == "NP3":
                    break
                time.sleep(0.02)
        assert manager.get(sid).latched_action.name == "NP3"

    def test_bad_clock_mode_rejected(self, client):
        response = client.post("/sessions", json={"clock": {"mode": "warp"}})
        assert response.status_code == 400


class TestExpiry:
    def test_idle_sessions_flush_on_expiry(self, client, tmp_path):
        sid = create_session(client)["session_id"]
        manager = client.app.state.manager
        session = manager.get(sid)
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()
            act(ws, "NP1")
        session.last_active -= manager.ttl + 1
        expired = manager.expire_idle()
        assert expired == [sid]
        assert manager.get(sid) is None
        assert session.flushed_to is not None
        exported = parse_trajectory(open(session.flushed_to).read())
        assert len(exported) == 1
        # the flushed file re-validates through the dataset pipeline
        assert cli_main(["dataset", "validate", session.flushed_to]) == 0

    def test_shutdown_flushes_open_sessions(self, tmp_path):
        import dataclasses
        config = load_config()
        config = dataclasses.replace(
            config, service=dataclasses.replace(
                config.service, export_dir=str(tmp_path / "exports")))
        app = create_app(config)
        with TestClient(app) as client:
            sid = create_session(client)["session_id"]
            with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
                ws.receive_json()
                act(ws, "NP2")
            session = client.app.state.manager.get(sid)
        assert session.flushed_to is not None
