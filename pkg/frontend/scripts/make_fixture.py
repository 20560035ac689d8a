"""Record a scripted 20-step operator session against the real service.

The console's integration test replays these wire messages through the UI
state machine and checks its rendered totals against the server's, and
re-validates the export through the dataset CLI.  Regenerate with:

    python3 scripts/make_fixture.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from pumpsched.config import load_config
from pumpsched.service import create_app

ACTIONS = ["NP1", "NP2", "NP2", "NOP", "NP2", "NP2", "NP3", "NP3", "NOP",
           "NOP", "NP4", "NP1", "NP1", "NP1", "NOP", "NP2", "NP2", "NP2",
           "NP2", "NOP"]

SCENARIO = {
    "initial_level": 52.5,
    "reward": "v1",
    "demand": {"days": 1, "seed": 99},
    "clock": {"mode": "manual"},
}


def main():
    out = Path(__file__).parent.parent / "test" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    app = create_app(load_config())
    with TestClient(app) as client:
        created = client.post("/sessions", json=SCENARIO).json()
        sid = created["session_id"]
        steps = []
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_json()  # connect-time snapshot
            for action in ACTIONS:
                ws.send_json({"v": 1, "kind": "act", "action": action})
                reply = ws.receive_json()
                assert reply["kind"] == "state", reply
                steps.append({"action": action, "reply": reply})
        export_csv = client.get(f"/sessions/{sid}/export").text

    fixture = {
        "scenario": SCENARIO,
        "created": created,
        "steps": steps,
        "export_csv": export_csv,
        "final_totals": steps[-1]["reply"]["totals"],
    }
    path = out / "session20.json"
    path.write_text(json.dumps(fixture, indent=1))
    print(f"wrote {path} ({len(steps)} steps, "
          f"{fixture['final_totals']['switches']} switches, "
          f"{fixture['final_totals']['kwh']:.3f} kWh)")


if __name__ == "__main__":
    main()
