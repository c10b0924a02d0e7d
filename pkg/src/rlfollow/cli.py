"""Command-line entry point: training runs, scenarios, calibration, reports.

Configuration follows a strict layering: built-in defaults (the published
parameter tables), then an optional TOML file, then ``--set`` overrides.
The fully resolved config plus seed is echoed into a manifest JSON next to
every output, so a run can be regenerated from its manifest alone.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, agent, ddpg, harness, idm, nn
from .rewards import AgentParams
from .sim_core import SimConfig, run_episode
from .stochastic import LEADER_OU, OuParams, generate_leader_profile

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_SCENARIO = 5


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return {
        "seed": 0,
        "agent": asdict(AgentParams()),
        "sim": {"dt": 0.1, "episode_steps": 500, "g_max": 200.0, "crash_mode": "terminate"},
        "ddpg": {
            "lr": 0.001,
            "gamma": 0.95,
            "batch_size": 32,
            "tau": 0.001,
            "buffer_capacity": 100000,
            "ou_theta": 0.15,
            "ou_sigma": 0.2,
            "ou_dt": 1.0,
            "episodes": 10000,
            "steps_per_episode": 500,
            "hidden_free": [16],
            "hidden_follow": [32, 32],
            "optimizer": "adam",
            "critic_l2": 0.0,
            "eval_every": 0,
            "eval_episodes": 3,
        },
    }


def _merge(base: dict, override: dict, prefix: str = "") -> None:
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {path}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path} must be a section")
            _merge(base[key], value, prefix=f"{path}.")
        else:
            base[key] = _coerce(path, value, base[key])


def _coerce(path: str, value, template):
    if isinstance(template, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"config key {path}: expected bool, got {value!r}")
    if isinstance(template, int) and not isinstance(template, bool):
        try:
            if isinstance(value, str):
                value = int(value, 0)
            if float(value) != int(value):
                raise ValueError
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {path}: expected int, got {value!r}") from None
    if isinstance(template, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {path}: expected float, got {value!r}") from None
    if isinstance(template, list):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        if not isinstance(value, list):
            raise ConfigError(f"config key {path}: expected list, got {value!r}")
        return [_coerce(path, v, template[0]) for v in value]
    if isinstance(template, str):
        return str(value)
    raise ConfigError(f"config key {path}: unsupported type")


def load_config(path: str | None, overrides: list[str], seed: int | None) -> dict:
    cfg = default_config()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                _merge(cfg, tomllib.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key: {key}")
            node = node[part]
        leaf = parts[-1]
        if leaf not in node or isinstance(node[leaf], dict):
            raise ConfigError(f"unknown config key: {key}")
        node[leaf] = _coerce(key, raw, node[leaf])
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def agent_params(cfg: dict) -> AgentParams:
    try:
        return AgentParams(**cfg["agent"])
    except ValueError as exc:
        raise ConfigError(f"agent parameters: {exc}") from None


def sim_config(cfg: dict) -> SimConfig:
    try:
        return SimConfig(**cfg["sim"])
    except ValueError as exc:
        raise ConfigError(f"sim parameters: {exc}") from None


def ddpg_config(cfg: dict, policy: str) -> ddpg.DdpgConfig:
    d = cfg["ddpg"]
    hidden = d["hidden_free"] if policy == "free" else d["hidden_follow"]
    try:
        return ddpg.DdpgConfig(
            lr=d["lr"],
            gamma=d["gamma"],
            batch_size=d["batch_size"],
            tau=d["tau"],
            buffer_capacity=d["buffer_capacity"],
            ou=OuParams(theta=d["ou_theta"], mu=0.0, sigma=d["ou_sigma"], dt=d["ou_dt"]),
            episodes=d["episodes"],
            steps_per_episode=d["steps_per_episode"],
            hidden=tuple(hidden),
            optimizer=d["optimizer"],
            critic_l2=d["critic_l2"],
            eval_every=d["eval_every"],
            eval_episodes=d["eval_episodes"],
            seed=cfg["seed"],
        )
    except ValueError as exc:
        raise ConfigError(f"ddpg parameters: {exc}") from None


def write_manifest(out_dir: Path, command: str, cfg: dict, extra: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "version": __version__, "config": cfg}
    if extra:
        doc.update(extra)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _cmd_train(args, policy: str) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    params = agent_params(cfg)
    dcfg = ddpg_config(cfg, policy)
    sim = SimConfig(
        dt=cfg["sim"]["dt"],
        episode_steps=dcfg.steps_per_episode,
        g_max=cfg["sim"]["g_max"],
    )
    out = Path(args.out)
    write_manifest(out, f"train-{policy}", cfg)

    def progress(episode, ep_return, mean):
        if args.verbose and (episode + 1) % 50 == 0:
            print(f"episode {episode + 1}: return {ep_return:.2f}, trailing30 {mean:.2f}")

    try:
        result = ddpg.train_policy(policy, dcfg, params, sim, progress=progress)
    except ddpg.TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        if exc.result is not None and exc.result.best_actor is not None:
            ddpg.save_training_artifacts(exc.result, dcfg, params, out, cfg["sim"]["g_max"])
        return EXIT_DIVERGED
    paths = ddpg.save_training_artifacts(result, dcfg, params, out, cfg["sim"]["g_max"])
    print(
        f"trained {policy} policy: best trailing-30 return "
        f"{result.best_trailing_mean:.2f} at episode {result.best_episode}; "
        f"checkpoint {paths['checkpoint']}"
    )
    return EXIT_OK


def _load_composite(args) -> agent.CompositeController:
    return agent.load_composite_controller(args.free, args.follow)


def _ckpt_ids(args) -> list[str]:
    return [nn.checkpoint_id(args.free), nn.checkpoint_id(args.follow)]


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    params = agent_params(cfg)
    controller = _load_composite(args)
    out = Path(args.out)
    write_manifest(out, "simulate", cfg, {"checkpoints": _ckpt_ids(args)})
    try:
        trace, report, checks = harness.scenario_external_profile(
            controller, params, checkpoint_ids=_ckpt_ids(args)
        )
    except harness.ScenarioFailure as exc:
        print(f"error: scenario failure: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    harness.export_trace_csv(out / "trace.csv", trace)
    report.to_json(out / "metrics.json")
    with open(out / "checks.json", "w") as fh:
        json.dump(checks, fh, indent=2)
    print(f"external-profile scenario: {json.dumps(checks)}")
    return EXIT_OK


def _cmd_platoon(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    params = agent_params(cfg)
    out = Path(args.out)
    write_manifest(out, "platoon", cfg, {"checkpoints": _ckpt_ids(args)})
    controllers = [_load_composite(args) for _ in range(args.followers)]
    if args.leader == "ou":
        from .stochastic import child_rngs

        rngs = child_rngs(cfg["seed"], "leader", "init")
        v0 = float(rngs["init"].uniform(0.0, params.v_des))
        u = generate_leader_profile(LEADER_OU, args.steps + 1, v0, rngs["leader"])
    else:
        try:
            traj = harness.ingest_trajectory(args.leader)
        except (OSError, harness.IngestError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        u = traj.v_leader
    trace, report = harness.scenario_platoon(
        controllers, u, params, checkpoint_ids=_ckpt_ids(args)
    )
    harness.export_trace_csv(out / "trace.csv", trace)
    report.to_json(out / "metrics.json")
    if trace.crashed:
        print(f"error: platoon crash at step {trace.crash_step}", file=sys.stderr)
        return EXIT_SCENARIO
    print(f"platoon acceleration variance (leader first): {report.accel_variance}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    out = Path(args.out)
    write_manifest(out, "calibrate-idm", cfg)
    try:
        traj = harness.ingest_trajectory(args.data)
    except (OSError, harness.IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    v_f = traj.v_followers[0]
    if v_f is not None:
        v0 = float(v_f[0])
    else:
        v0 = max(0.0, float(traj.v_leader[0] - (traj.gaps[0][1] - traj.gaps[0][0]) / traj.dt))
    clamp = (-9.0, 2.0) if args.clamp else None
    params, sse = idm.calibrate(
        traj.v_leader, traj.gaps[0], v0, restarts=args.restarts,
        seed=cfg["seed"], dt=traj.dt, clamp=clamp,
    )
    doc = {"params": asdict(params), "sse_ln_gap": sse, "clamped": bool(args.clamp)}
    with open(out / "calibrated_idm.json", "w") as fh:
        json.dump(doc, fh, indent=2)
    print(f"calibrated IDM: {json.dumps(doc)}")
    return EXIT_OK


def _cmd_ttc(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    params = agent_params(cfg)
    out = Path(args.out)
    write_manifest(out, "ttc", cfg, {"checkpoints": _ckpt_ids(args)})
    controller = _load_composite(args)
    traces = harness.run_ou_episodes(
        lambda: [controller], args.episodes, cfg["seed"], params, steps=args.steps
    )
    all_series = []
    crash_count = 0
    for trace in traces:
        ttc = harness.compute_ttc(trace)
        all_series.extend(ttc.series)
        crash_count += 1 if trace.crashed else 0
    merged = np.concatenate(all_series) if all_series else np.empty(0)
    edges = np.arange(0.0, 20.0 + 0.25, 0.5)
    hist, _ = np.histogram(merged[merged <= 20.0], bins=edges)
    result = harness.TtcResult(
        series=all_series, hist=hist, bin_edges=edges,
        overflow=int(np.sum(merged > 20.0)),
    )
    harness.export_ttc_histogram_csv(out / "ttc_histogram.csv", result)
    summary = {
        "episodes": args.episodes,
        "crashes": crash_count,
        "min_ttc": result.min_ttc,
        "samples": result.sample_count(),
    }
    with open(out / "ttc_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"ttc: {json.dumps(summary)}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    params = agent_params(cfg)
    out = Path(args.out)
    write_manifest(out, "compare", cfg, {"checkpoints": _ckpt_ids(args)})
    try:
        traj = harness.ingest_trajectory(args.data)
        with open(args.idm) as fh:
            calib = json.load(fh)
        idm_params = idm.IdmParams(**calib["params"])
    except (OSError, harness.IngestError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    rl = _load_composite(args)
    baseline = agent.IdmController(idm_params)
    u = traj.v_leader
    g0 = float(traj.gaps[0][0])
    v_f = traj.v_followers[0]
    v0 = float(v_f[0]) if v_f is not None else float(u[0])
    sim = SimConfig(dt=traj.dt, episode_steps=len(u) - 1, crash_mode="terminate")
    rl_trace = run_episode(u, [rl], [v0], [g0], sim, params)
    idm_trace = run_episode(u, [baseline], [v0], [g0], sim, params)
    ref = traj.gaps[0][1:]
    try:
        table = harness.cross_compare(rl_trace, idm_trace, ref, params)
    except ValueError as exc:
        print(f"error: {exc} (crash during comparison run?)", file=sys.stderr)
        return EXIT_SCENARIO
    with open(out / "comparison.json", "w") as fh:
        json.dump(table, fh, indent=2)
    harness.export_trace_csv(out / "rl_trace.csv", rl_trace)
    harness.export_trace_csv(out / "idm_trace.csv", idm_trace)
    print(f"comparison: {json.dumps(table)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlfollow",
        description="Train and validate the modular RL car-following agent.",
    )
    parser.add_argument("--version", action="version", version=f"rlfollow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted path)")
        p.add_argument("--out", required=out_required, help="output directory")

    def checkpoints(p):
        p.add_argument("--free", required=True, help="free-policy checkpoint")
        p.add_argument("--follow", required=True, help="follow-policy checkpoint")

    p = sub.add_parser("train-free", help="train the free-driving policy")
    common(p)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=lambda a: _cmd_train(a, "free"))

    p = sub.add_parser("train-follow", help="train the car-following policy")
    common(p)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=lambda a: _cmd_train(a, "follow"))

    p = sub.add_parser("simulate", help="run the external-profile scenario")
    common(p)
    checkpoints(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("platoon", help="run a platoon behind an OU or recorded leader")
    common(p)
    checkpoints(p)
    p.add_argument("--followers", type=int, default=5)
    p.add_argument("--leader", default="ou", help='"ou" or a trajectory CSV path')
    p.add_argument("--steps", type=int, default=1000)
    p.set_defaults(func=_cmd_platoon)

    p = sub.add_parser("calibrate-idm", help="calibrate IDM to a trajectory file")
    common(p)
    p.add_argument("--data", required=True, help="trajectory CSV")
    p.add_argument("--clamp", action="store_true",
                   help="clamp IDM output to the RL action range during calibration")
    p.add_argument("--restarts", type=int, default=10,
                   help="random multistart count for the calibration")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("ttc", help="TTC distribution over fresh OU-leader episodes")
    common(p)
    checkpoints(p)
    p.add_argument("--episodes", type=int, default=15)
    p.add_argument("--steps", type=int, default=500)
    p.set_defaults(func=_cmd_ttc)

    p = sub.add_parser("compare", help="cross-compare RL and calibrated IDM on data")
    common(p)
    checkpoints(p)
    p.add_argument("--idm", required=True, help="calibrated IDM JSON")
    p.add_argument("--data", required=True, help="reference trajectory CSV")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
