"""Command-line entry point.

Subcommands wire the library into runnable workflows:

    pumpsched simulate  --days 2 --schedule rule --out runs/sim
    pumpsched dataset   synth --days 3 --out synth.csv
    pumpsched train     --data synth.csv --steps 500 --out runs/train
    pumpsched eval      --checkpoint runs/train/checkpoint.npz --out runs/eval
    pumpsched serve     --port 8000

Every run writes a ``manifest.json`` next to its outputs recording the
subcommand, config source, seed, inputs/outputs and timestamps.  Exit
codes: 0 success, 1 usage, 2 validation/config problems, 3 runtime
failures.  ``--config`` falls back to the ``PUMPSCHED_CONFIG`` env var,
then to the packaged defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import sys
from pathlib import Path

from . import __version__
from .agent import REMAgent
from .config import AppConfig, load_config
from .dataset import (
    parse_log,
    slice_episodes,
    synthesize_demand,
    write_log,
    write_trajectory,
)
from .env import OBSERVATION_DIM, Action
from .errors import ConfigError, PumpschedError, SchemaError, ValidationError
from .metrics import aggregate, compare, monthly_csv, profile_csv
from .replay import PrioritizedBuffer
from .rollout import (
    agent_policy,
    band_rule_policy,
    behavioral_policy,
    constant_policy,
    simulate,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_manifest(out_dir: Path, subcommand: str, config: AppConfig,
                    seed: int | None, inputs: list[str], outputs: list[str]):
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "config": config.source,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "created": dt.datetime.now().isoformat(timespec="seconds"),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _demand_records(args, config: AppConfig):
    if args.demand == "synth":
        days = args.days or 1
        return synthesize_demand(days, args.seed, config.demand), ["<synth>"]
    records = parse_log(Path(args.demand).read_text())
    return records, [args.demand]


def _resolve_policy(spec: str, config: AppConfig, inputs: list[str]):
    name = spec.lower()
    if name == "nop":
        return constant_policy(Action.NOP)
    if name in ("np1", "np2", "np3", "np4"):
        return constant_policy(Action.from_name(name))
    if name == "rule":
        return band_rule_policy(config.rule)
    path = Path(spec)
    if path.suffix == ".npz":
        inputs.append(spec)
        return agent_policy(REMAgent.load(path), config.env.demand_max)
    if path.suffix == ".csv":
        inputs.append(spec)
        return behavioral_policy(parse_log(path.read_text()))
    raise ConfigError(
        f"unknown schedule {spec!r}: expected nop, np1..np4, rule, a "
        "checkpoint (.npz) or a recorded log (.csv)")


def cmd_simulate(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    demand, inputs = _demand_records(args, config)
    policy = _resolve_policy(args.schedule, config, inputs)
    steps = args.horizon or len(demand)
    rows, _ = simulate(config, demand, policy, steps=steps)

    traj_path = out_dir / "trajectory.csv"
    with open(traj_path, "w") as fh:
        write_trajectory(rows, fh)
    report = aggregate(rows, safety_level=config.reward.level_safe,
                       quality_level=config.reward.level_quality)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_json_dict(), indent=2) + "\n")
    (out_dir / "tank_profile.csv").write_text(profile_csv(report))
    (out_dir / "monthly_kwh.csv").write_text(monthly_csv(report))
    _write_manifest(out_dir, "simulate", config, args.seed, inputs,
                    ["trajectory.csv", "report.json", "tank_profile.csv",
                     "monthly_kwh.csv"])
    print(f"simulated {len(rows)} minutes -> {traj_path}")
    print(f"  kWh {report.total_kwh:.2f}  switches {report.total_switches}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = parse_log(Path(args.data).read_text())
    episodes, report = slice_episodes(records)
    if not episodes:
        raise ValidationError(
            f"{args.data}: no complete day-aligned episode found "
            f"(dropped {report.dropped_leading} leading / "
            f"{report.dropped_trailing} trailing minutes)")

    from .rollout import replay_episodes
    transitions = replay_episodes(config, episodes)
    buffer = PrioritizedBuffer(max(config.replay.capacity, len(transitions)),
                               alpha=config.replay.alpha, eps=config.replay.eps)
    for t in transitions:
        buffer.push(t)

    agent = REMAgent(config.train)
    agent.fit(buffer, steps=args.steps, log_every=args.log_every)

    ckpt = out_dir / "checkpoint.npz"
    agent.save(ckpt)
    log_path = out_dir / "training_log.csv"
    with open(log_path, "w") as fh:
        fh.write("step,loss,mean_td,mean_q,max_q\n")
        for row in agent.history:
            fh.write(f"{row['step']},{row['loss']!r},{row['mean_td']!r},"
                     f"{row['mean_q']!r},{row['max_q']!r}\n")
    _write_manifest(out_dir, "train", config, config.train.seed, [args.data],
                    ["checkpoint.npz", "training_log.csv"])
    last = agent.history[-1]
    print(f"trained {args.steps} steps on {len(transitions)} transitions "
          f"({len(episodes)} episodes) -> {ckpt}")
    print(f"  final loss {last['loss']:.6f}  mean|td| {last['mean_td']:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    agent = REMAgent.load(Path(args.checkpoint))
    if agent.obs_dim != OBSERVATION_DIM or agent.n_actions != len(Action):
        raise ConfigError(
            f"checkpoint dimensions ({agent.obs_dim} features, "
            f"{agent.n_actions} actions) do not match the environment")
    demand, inputs = _demand_records(args, config)
    inputs.append(args.checkpoint)
    steps = args.horizon or min(len(demand), 1440)
    rows, _ = simulate(config, demand, agent_policy(agent, config.env.demand_max),
                       steps=steps)
    with open(out_dir / "trajectory.csv", "w") as fh:
        write_trajectory(rows, fh)
    report = aggregate(rows, safety_level=config.reward.level_safe,
                       quality_level=config.reward.level_quality)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_json_dict(), indent=2) + "\n")
    (out_dir / "tank_profile.csv").write_text(profile_csv(report))
    (out_dir / "monthly_kwh.csv").write_text(monthly_csv(report))

    outputs = ["trajectory.csv", "report.json", "tank_profile.csv",
               "monthly_kwh.csv"]
    if args.baseline != "none":
        policy = _resolve_policy(args.baseline, config, inputs)
        base_rows, _ = simulate(config, demand, policy, steps=steps)
        base_report = aggregate(base_rows,
                                safety_level=config.reward.level_safe,
                                quality_level=config.reward.level_quality)
        diff = compare(base_report, report)
        (out_dir / "comparison.json").write_text(json.dumps(diff, indent=2) + "\n")
        outputs.append("comparison.json")
    _write_manifest(out_dir, "eval", config, args.seed, inputs, outputs)
    print(f"evaluated {steps} minutes: kWh {report.total_kwh:.2f}  "
          f"switches {report.total_switches}  "
          f"safety minutes {report.safety_violation_minutes}")
    return EXIT_OK


def cmd_dataset(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if args.dataset_cmd == "synth":
        records = synthesize_demand(args.days, args.seed, config.demand)
        if args.demand_only:
            rows = records
            with open(args.out, "w") as fh:
                write_log(rows, fh)
        else:
            # overlay the built-in operating rule so kW/level columns are live
            rows, _ = simulate(config, records, band_rule_policy(config.rule))
            with open(args.out, "w") as fh:
                write_trajectory(rows, fh)
        print(f"wrote {len(records)} rows ({args.days} days) -> {args.out}")
        return EXIT_OK

    if args.dataset_cmd == "validate":
        text = Path(args.path).read_text()
        records = parse_log(text)
        episodes, report = slice_episodes(records)
        print(f"{args.path}: {len(records)} rows valid, "
              f"{report.episodes} complete episodes, "
              f"{len(report.excluded_days)} excluded days, "
              f"{report.dropped_leading}+{report.dropped_trailing} rows dropped")
        return EXIT_OK

    if args.dataset_cmd == "slice":
        records = parse_log(Path(args.path).read_text())
        episodes, report = slice_episodes(records)
        summary = {
            "episodes": report.episodes,
            "dropped_leading": report.dropped_leading,
            "dropped_trailing": report.dropped_trailing,
            "excluded_days": [[d.isoformat(), why]
                              for d, why in report.excluded_days],
            "starts": [ep.records[0].timestamp.isoformat()
                       for ep in episodes],
        }
        text = json.dumps(summary, indent=2)
        if args.out:
            Path(args.out).write_text(text + "\n")
        print(text)
        return EXIT_OK
    raise ConfigError(f"unknown dataset subcommand {args.dataset_cmd!r}")


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _apply_overrides(load_config(args.config), args)
    app = create_app(config)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SystemExit as exc:
        # uvicorn exits 1 itself on startup failures such as a busy port
        if exc.code:
            print(f"service failed to start on {args.host}:{args.port}",
                  file=sys.stderr)
            return EXIT_RUNTIME
    return EXIT_OK


def _apply_overrides(config: AppConfig, args) -> AppConfig:
    updates = {}
    if getattr(args, "reward", None):
        updates["reward"] = dataclasses.replace(config.reward,
                                                variant=args.reward)
    if getattr(args, "seed", None) is not None:
        updates["train"] = dataclasses.replace(config.train, seed=args.seed)
    if getattr(args, "k", None):
        updates["train"] = dataclasses.replace(
            updates.get("train", config.train), k=args.k)
    return dataclasses.replace(config, **updates) if updates else config


def _add_common(p: argparse.ArgumentParser, seed_default=0):
    p.add_argument("--config", default=None,
                   help="JSON config path (default: $PUMPSCHED_CONFIG or packaged)")
    p.add_argument("--seed", type=int, default=seed_default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pumpsched",
                     description="water-network pump-scheduling testbed")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a schedule through the simulator")
    _add_common(sim)
    sim.add_argument("--out", default="runs/simulate")
    sim.add_argument("--days", type=int, default=1)
    sim.add_argument("--demand", default="synth",
                     help="'synth' or a CSV demand/operation log")
    sim.add_argument("--schedule", default="rule",
                     help="nop | np1..np4 | rule | checkpoint.npz | log.csv")
    sim.add_argument("--reward", choices=["v1", "v2"], default=None)
    sim.add_argument("--horizon", type=int, default=None, help="minutes")

    train = sub.add_parser("train", help="offline training on a dataset")
    _add_common(train, seed_default=None)
    train.add_argument("--out", default="runs/train")
    train.add_argument("--data", required=True)
    train.add_argument("--steps", type=int, default=500)
    train.add_argument("--k", type=int, default=None, help="ensemble heads")
    train.add_argument("--reward", choices=["v1", "v2"], default=None)
    train.add_argument("--log-every", type=int, default=50)

    ev = sub.add_parser("eval", help="greedy rollout of a checkpoint")
    _add_common(ev)
    ev.add_argument("--out", default="runs/eval")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--days", type=int, default=1)
    ev.add_argument("--demand", default="synth")
    ev.add_argument("--horizon", type=int, default=None, help="minutes")
    ev.add_argument("--reward", choices=["v1", "v2"], default=None)
    ev.add_argument("--baseline", default="none",
                    help="none | nop | rule | np1..np4 | log.csv")

    ds = sub.add_parser("dataset", help="synthesize, validate or slice logs")
    _add_common(ds)
    dssub = ds.add_subparsers(dest="dataset_cmd", required=True,
                              parser_class=_Parser)
    synth = dssub.add_parser("synth")
    _add_common(synth)
    synth.add_argument("--days", type=int, default=1)
    synth.add_argument("--out", default="synth.csv")
    synth.add_argument("--demand-only", action="store_true",
                       help="emit the raw demand trace without a schedule")
    val = dssub.add_parser("validate")
    _add_common(val)
    val.add_argument("path")
    sl = dssub.add_parser("slice")
    _add_common(sl)
    sl.add_argument("path")
    sl.add_argument("--out", default=None)

    serve = sub.add_parser("serve", help="interactive operator session service")
    _add_common(serve)
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "eval": cmd_eval,
    "dataset": cmd_dataset,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (SchemaError, ValidationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PumpschedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
