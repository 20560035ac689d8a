import json
import subprocess
import sys

import pytest

from pumpsched.cli import main
from pumpsched.dataset import behavioral_action, parse_log, parse_trajectory
from pumpsched.metrics import count_switches


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "synth.csv"
    assert run_cli("dataset", "synth", "--days", "2", "--seed", "3",
                   "--out", str(path)) == 0
    return path


class TestDatasetCommands:
    def test_synth_row_count(self, synth_csv):
        records = parse_log(synth_csv.read_text())
        assert len(records) == 2880

    def test_synth_has_live_kw_columns(self, synth_csv):
        records = parse_log(synth_csv.read_text())
        assert any(sum(r.kw) > 0 for r in records)

    def test_demand_only_synth(self, tmp_path):
        out = tmp_path / "demand.csv"
        assert run_cli("dataset", "synth", "--days", "1", "--demand-only",
                       "--out", str(out)) == 0
        records = parse_log(out.read_text())
        assert len(records) == 1440
        assert all(sum(r.kw) == 0 for r in records)

    def test_validate_round_trip(self, synth_csv, capsys):
        assert run_cli("dataset", "validate", str(synth_csv)) == 0
        assert "2880 rows valid" in capsys.readouterr().out

    def test_validate_corrupt_row_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        text = synthless_header() + "2021-01-01T00:00,oops,52,0,0,0,0\n"
        bad.write_text(text)
        assert run_cli("dataset", "validate", str(bad)) == 2
        assert "line 2" in capsys.readouterr().err

    def test_slice_reports_two_episodes(self, synth_csv, capsys):
        assert run_cli("dataset", "slice", str(synth_csv)) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["episodes"] == 2

    def test_missing_file_exits_2(self):
        assert run_cli("dataset", "validate", "/nonexistent/file.csv") == 2


def synthless_header():
    return "timestamp,demand,tank_level,kw_np1,kw_np2,kw_np3,kw_np4\n"


class TestSimulate:
    def test_nop_day_drains_monotonically(self, tmp_path):
        out = tmp_path / "sim"
        assert run_cli("simulate", "--days", "1", "--schedule", "nop",
                       "--seed", "5", "--out", str(out)) == 0
        rows = parse_trajectory((out / "trajectory.csv").read_text())
        levels = [r.tank_level for r in rows]
        assert all(a >= b for a, b in zip(levels, levels[1:]))
        assert all(r.action == "NOP" for r in rows)

    def test_deterministic_output(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert run_cli("simulate", "--days", "1", "--schedule", "rule",
                           "--seed", "9", "--out", str(out)) == 0
        assert ((out_a / "trajectory.csv").read_bytes()
                == (out_b / "trajectory.csv").read_bytes())

    def test_replaying_recorded_day_reproduces_actions(self, synth_csv, tmp_path):
        out = tmp_path / "replay"
        assert run_cli("simulate", "--demand", str(synth_csv), "--schedule",
                       str(synth_csv), "--out", str(out)) == 0
        replayed = parse_trajectory((out / "trajectory.csv").read_text())
        source = parse_log(synth_csv.read_text())
        assert [r.action for r in replayed] == [
            behavioral_action(r).name for r in source]

    def test_manifest_written(self, tmp_path):
        out = tmp_path / "sim"
        run_cli("simulate", "--days", "1", "--schedule", "nop", "--out", str(out))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "simulate"
        assert "trajectory.csv" in manifest["outputs"]

    def test_report_switches_match_actions(self, tmp_path):
        out = tmp_path / "sim"
        run_cli("simulate", "--days", "1", "--schedule", "rule",
                "--seed", "2", "--out", str(out))
        rows = parse_trajectory((out / "trajectory.csv").read_text())
        report = json.loads((out / "report.json").read_text())
        assert report["total_switches"] == count_switches(
            [r.action for r in rows])


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, synth_csv):
    out = tmp_path_factory.mktemp("train")
    code = run_cli("train", "--data", str(synth_csv), "--steps", "30",
                   "--out", str(out), "--k", "2")
    assert code == 0
    return out


class TestTrainEval:
    def test_checkpoint_and_log_exist(self, run_dir):
        assert (run_dir / "checkpoint.npz").exists()
        log = (run_dir / "training_log.csv").read_text().strip().split("\n")
        assert log[0] == "step,loss,mean_td,mean_q,max_q"
        assert len(log) > 1

    def test_losses_finite(self, run_dir):
        import math
        for line in (run_dir / "training_log.csv").read_text().strip().split("\n")[1:]:
            values = [float(v) for v in line.split(",")[1:]]
            assert all(math.isfinite(v) for v in values)

    def test_eval_produces_report(self, run_dir, tmp_path):
        out = tmp_path / "eval"
        code = run_cli("eval", "--checkpoint", str(run_dir / "checkpoint.npz"),
                       "--out", str(out), "--seed", "4", "--baseline", "nop")
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["horizon_minutes"] == 1440
        comparison = json.loads((out / "comparison.json").read_text())
        assert "total_kwh" in comparison["fields"]

    def test_eval_deterministic(self, run_dir, tmp_path):
        outs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            run_cli("eval", "--checkpoint", str(run_dir / "checkpoint.npz"),
                    "--out", str(out), "--seed", "4")
            outs.append((out / "trajectory.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_train_on_corrupt_dataset_exits_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(synthless_header() + "2021-01-01T00:00,x,52,0,0,0,0\n")
        assert run_cli("train", "--data", str(bad), "--out",
                       str(tmp_path / "t")) == 2


class TestUsageAndConfig:
    def test_unknown_command_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("frobnicate")
        assert exc.value.code == 1

    def test_missing_required_flag_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("train")
        assert exc.value.code == 1

    def test_bad_config_exits_2(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"system": {"k0": -1}}))
        assert run_cli("simulate", "--config", str(cfg), "--days", "1",
                       "--out", str(tmp_path / "x")) == 2

    def test_config_env_var_fallback(self, tmp_path, monkeypatch, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"demand": {"mean": 90.0}}))
        monkeypatch.setenv("PUMPSCHED_CONFIG", str(cfg))
        out = tmp_path / "sim"
        assert run_cli("simulate", "--days", "1", "--schedule", "nop",
                       "--out", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"] == str(cfg)

    def test_module_entrypoint(self):
        proc = subprocess.run([sys.executable, "-m", "pumpsched.cli",
                               "--version"], capture_output=True, text=True)
        assert proc.returncode == 0


class TestHorizonValidation:
    def test_horizon_beyond_demand_exits_2(self, tmp_path, capsys):
        code = run_cli("simulate", "--days", "1", "--horizon", "2000",
                       "--schedule", "nop", "--out", str(tmp_path / "x"))
        assert code == 2
        assert "exceeds the demand trace" in capsys.readouterr().err


class TestServe:
    def test_busy_port_exits_3(self):
        import socket

        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        sock.listen(1)
        port = sock.getsockname()[1]
        try:
            proc = subprocess.run(
                [sys.executable, "-m", "pumpsched.cli", "serve",
                 "--port", str(port)],
                capture_output=True, text=True, timeout=60)
        finally:
            sock.close()
        assert proc.returncode == 3
