"""Command-line interface driving the whole pipeline.

Subcommands cover the full loop: collect data, train and check the model,
predict, plan, run single episodes, tune the baseline, and run paired-seed
benchmarks with report emission. Errors exit with a category code:

    2  bad usage, configuration or input values
    3  on-disk format problems (magic, version, checksum, truncation)
    4  numeric failures (training divergence, planning failure, invariants)
    5  environment/goal errors (invalid goal, wrong task, out of view)
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import baseline as baseline_mod
from . import bench as bench_mod
from . import data as data_mod
from .config import BaselineConfig, Config, load_config
from .errors import (ConfigError, CorruptedStateError, DimensionError,
                     FormatError, HorizonError, InvalidGoalError,
                     InvalidInputError, InvalidSplitError, InvariantError,
                     NoContactError, NotVisibleError, PlanningFailedError,
                     TaskMismatchError, TouchMpcError, TrainingDivergedError)
from .models import (LearnedPredictor, ModelConfig, OraclePredictor,
                     PersistencePredictor, grad_check, train)
from .planner import mpc_episode

_EXIT_CODES = (
    (FormatError, 3),
    ((TrainingDivergedError, PlanningFailedError, InvariantError), 4),
    ((InvalidGoalError, NotVisibleError, TaskMismatchError,
      CorruptedStateError, HorizonError, NoContactError), 5),
    ((ConfigError, InvalidInputError, DimensionError, InvalidSplitError), 2),
    (TouchMpcError, 2),
)


def _load(args) -> Config:
    if args.config:
        return load_config(args.config)
    return Config()


def _env(cfg: Config, args) -> "Config":
    if getattr(args, "task", None):
        env = dataclasses.replace(cfg.env, task=args.task)
        cfg = dataclasses.replace(cfg, env=env)
    return cfg


def _env_from_manifest(manifest: dict):
    from .config import EnvConfig
    raw = dict(manifest["env"])
    for key in ("image_shape", "workspace_z"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return EnvConfig(**raw)


def _cmd_collect(args) -> int:
    cfg = _env(_load(args), args)
    ds = data_mod.collect(cfg.env, args.n_traj, args.t_ep, args.seed)
    data_mod.save(ds, args.out)
    print(f"collected {len(ds)} trajectories of {args.t_ep} steps "
          f"({cfg.env.env_tag}) -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load(args)
    ds = data_mod.load(args.data)
    train_ds, val_ds = data_mod.split(ds, args.val_fraction, cfg.train.seed)
    model_cfg = ModelConfig(image_shape=ds.image_shape)
    model = LearnedPredictor.create(model_cfg, seed=cfg.train.seed)
    model, history = train(model, train_ds, val_ds, cfg.train)
    model.save(args.out)
    hist_path = Path(args.out).with_suffix(".history.json")
    hist_path.write_text(json.dumps(history, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    for ep, (tr, vl) in enumerate(zip(history["train_loss"], history["val_loss"])):
        print(f"epoch {ep}: train {tr:.6f}  val {vl:.6f}  "
              f"horizon {history['horizon'][ep]}")
    print(f"model -> {args.out}")
    return 0


def _cmd_grad_check(args) -> int:
    model_cfg = ModelConfig(image_shape=(6, 8, 3))
    model = LearnedPredictor.create(model_cfg, seed=args.seed)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    probe = (rng.uniform(0.0, 1.0, (1, 3, 6, 8, 3)),
             rng.uniform(-6.0, 6.0, (1, 2, 3)),
             rng.uniform(-6.0, 6.0, (1, 2, 3)),
             rng.uniform(0.0, 1.0, (1, 2, 6, 8, 3)))
    err = grad_check(model, probe, args.epsilon)
    ok = err < args.threshold
    print(f"grad check: max relative error {err:.3e} "
          f"({'PASS' if ok else 'FAIL'} at {args.threshold:g})")
    return 0 if ok else 4


def _make_model(args, cfg: Config):
    if getattr(args, "oracle", False):
        return OraclePredictor(cfg.env)
    if getattr(args, "persistence", False):
        return PersistencePredictor()
    if getattr(args, "model", None):
        return LearnedPredictor.load(args.model)
    raise ConfigError("pick a dynamics model: --oracle, --persistence or --model PATH")


def _cmd_predict(args) -> int:
    cfg = _load(args)
    ds = data_mod.load(args.data)
    if not 0 <= args.traj < len(ds):
        raise InvalidInputError(f"trajectory index {args.traj} out of range")
    tr = ds.trajectories[args.traj]
    from .models.base import CONTEXT_FRAMES, PredictionRequest
    cf = CONTEXT_FRAMES
    sim_state = None
    if getattr(args, "oracle", False):
        # the oracle needs the hidden state at the end of the context, which
        # a recorded trajectory reproduces exactly from its seed and the
        # environment snapshot in the dataset manifest
        from .sim import reset, step
        env = _env_from_manifest(ds.manifest)
        cfg = dataclasses.replace(cfg, env=env)
        sim_state, _ = reset(env, tr.seed)
        for a in tr.actions[:cf - 1]:
            sim_state, _ = step(env, sim_state, a)
    req = PredictionRequest(tr.images[:cf], tr.actions[:cf - 1],
                            tr.actions[cf - 1:], sim_state=sim_state)
    model = _make_model(args, cfg)
    preds = model.predict(req)
    out_traj = data_mod.Trajectory(
        np.concatenate([tr.images[:cf], preds]), tr.actions, tr.seed, tr.env_tag)
    Path(args.out).write_bytes(data_mod.traj_to_bytes(out_traj))
    from .core import mse
    per_step = [mse(p, g) for p, g in zip(preds, tr.images[cf:])]
    print("per-step prediction MSE:",
          " ".join(f"{m:.5f}" for m in per_step))
    print(f"predicted rollout -> {args.out}")
    return 0


def _cmd_plan(args) -> int:
    cfg = _env(_load(args), args)
    goal, goal_state = bench_mod.sample_goal(cfg.env, args.goal_seed, 0, cfg.bench)
    model = _make_model(args, cfg)
    from .models.base import PredictionRequest, padded_context
    from .planner import plan_cem
    from .sim import reset, step
    state, obs = reset(cfg.env, args.seed)
    observations, actions = [obs], []
    for a in bench_mod.initial_engagement(cfg.env, goal_state, False):
        state, obs = step(cfg.env, state, a)
        observations.append(obs)
        actions.append(a)
    ctx_imgs, ctx_acts = padded_context(observations, actions)
    req = PredictionRequest(ctx_imgs, ctx_acts,
                            np.zeros((cfg.planner.horizon, 3)), sim_state=state)
    plan = plan_cem(model, req, goal, cfg.planner, seed=args.seed)
    print(f"best plan cost {plan.best_cost:.6f}; elite means "
          + " ".join(f"{c:.5f}" for c in plan.elite_mean_costs))
    if args.out:
        out_traj = data_mod.Trajectory(
            np.concatenate([ctx_imgs[-1:], plan.predicted_images]),
            plan.best_actions.astype(np.float32), args.seed, cfg.env.env_tag)
        Path(args.out).write_bytes(data_mod.traj_to_bytes(out_traj))
        print(f"predicted rollout -> {args.out}")
    return 0


def _cmd_episode(args) -> int:
    cfg = _env(_load(args), args)
    goal, goal_state = bench_mod.sample_goal(cfg.env, args.goal_seed, 0, cfg.bench)
    if args.baseline:
        controller = bench_mod.make_baseline_controller(
            cfg.env, step_length=cfg.baseline.step_length,
            blank_eps=cfg.baseline.blank_eps)
    else:
        controller = bench_mod.MpcController(_make_model(args, cfg), cfg.planner)
    init_actions = bench_mod.initial_engagement(cfg.env, goal_state,
                                                args.stick_opposite)
    final, traj = bench_mod.run_controller_episode(
        cfg.env, args.seed, controller, goal, args.t_max, init_actions)
    from .core import mse
    print(f"final image MSE to goal: {mse(traj.images[-1], goal.image):.6f}")
    if cfg.env.task == "die":
        print(f"die success: {final.top_face == goal_state.top_face} "
              f"(top face {final.top_face}, goal {goal_state.top_face})")
    else:
        d = bench_mod.final_centroid_distance_px(cfg.env, final, goal_state)
        print(f"final centroid distance: {d:.2f} px")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        Path(args.out, "episode.tmpc").write_bytes(data_mod.traj_to_bytes(traj))
        print(f"trajectory -> {args.out}/episode.tmpc")
    return 0


def _cmd_tune_baseline(args) -> int:
    cfg = _env(_load(args), args)
    grid = [float(x) for x in args.grid.split(",")]
    best = baseline_mod.tune_step_length(cfg.env, grid, args.episodes, args.seed,
                                         t_max=args.t_max)
    print(f"tuned step length: {best} mm (grid {grid}, {args.episodes} episodes, "
          f"seed {args.seed})")
    if args.out:
        lines = ["# tuned by `touchmpc tune-baseline`",
                 f"# grid = {grid}; episodes = {args.episodes}; seed = {args.seed}",
                 "[baseline]",
                 f"step_length = {best}",
                 ""]
        Path(args.out).write_text("\n".join(lines), encoding="utf-8")
        print(f"baseline config -> {args.out}")
    return 0


def _report_to_dict(report: bench_mod.BenchReport) -> dict:
    return {
        "task": report.task,
        "n_episodes": report.n_episodes,
        "t_max": report.t_max,
        "seed": report.seed,
        "controllers": report.controllers,
        "episodes": {name: [dataclasses.asdict(r) for r in results]
                     for name, results in report.episodes.items()},
        "medians": report.medians,
        "success_rates": report.success_rates,
        "threshold_curves": {k: [[float(x), int(y)] for x, y in v]
                             for k, v in report.threshold_curves.items()},
    }


def _report_from_dict(blob: dict) -> bench_mod.BenchReport:
    episodes = {name: [bench_mod.EpisodeResult(**r) for r in results]
                for name, results in blob["episodes"].items()}
    return bench_mod.BenchReport(
        task=blob["task"], n_episodes=blob["n_episodes"], t_max=blob["t_max"],
        seed=blob["seed"], controllers=blob["controllers"], episodes=episodes,
        medians=blob["medians"], success_rates=blob["success_rates"],
        threshold_curves={k: [(float(x), int(y)) for x, y in v]
                          for k, v in blob["threshold_curves"].items()})


def _cmd_benchmark(args) -> int:
    cfg = _env(_load(args), args)
    controllers = {}
    for name in args.controllers.split(","):
        name = name.strip()
        if name == "baseline":
            controllers[name] = (lambda: bench_mod.make_baseline_controller(
                cfg.env, step_length=cfg.baseline.step_length,
                blank_eps=cfg.baseline.blank_eps))
        elif name == "mpc-oracle":
            controllers[name] = (lambda: bench_mod.MpcController(
                OraclePredictor(cfg.env), cfg.planner))
        elif name == "mpc-learned":
            if not args.model:
                raise ConfigError("mpc-learned needs --model PATH")
            model = LearnedPredictor.load(args.model)
            controllers[name] = (lambda m=model: bench_mod.MpcController(
                m, cfg.planner))
        else:
            raise ConfigError(f"unknown controller {name!r}")
    report = bench_mod.run_benchmark(cfg.env, controllers, args.episodes,
                                     args.t_max, args.seed, cfg.bench,
                                     stick_opposite=args.stick_opposite)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(_report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    written = bench_mod.emit_report(report, out)
    for name in report.controllers:
        med = report.medians[name]
        line = f"{name}: median MSE {med['final_mse']:.6f}"
        if "centroid_distance_px" in med:
            line += f", median centroid distance {med['centroid_distance_px']:.2f} px"
        if name in report.success_rates:
            line += f", success rate {report.success_rates[name]:.2f}"
        print(line)
    print(f"report -> {out}/report.json, " + ", ".join(written))
    return 0


def _cmd_report(args) -> int:
    blob = json.loads(Path(args.report).read_text(encoding="utf-8"))
    report = _report_from_dict(blob)
    written = bench_mod.emit_report(report, args.out)
    print(f"emitted {', '.join(written)} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="touchmpc",
        description="Tactile servoing on simulated gel-imprint sensors.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="INI config file (defaults used otherwise)")
        p.add_argument("--task", choices=("ball", "stick", "die"),
                       help="override the configured task")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("collect", help="record random-interaction trajectories")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-traj", type=int, default=100)
    p.add_argument("--t-ep", type=int, default=15)
    p.set_defaults(fn=_cmd_collect)

    p = sub.add_parser("train", help="train the learned predictor on a dataset")
    common(p, seed=False)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("grad-check", help="verify analytic gradients on toy shapes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(fn=_cmd_grad_check)

    p = sub.add_parser("predict", help="predict a recorded trajectory's future")
    common(p, seed=False)
    p.add_argument("--data", required=True)
    p.add_argument("--traj", type=int, default=0)
    p.add_argument("--model")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--persistence", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("plan", help="run one CEM planning call against a goal")
    common(p)
    p.add_argument("--goal-seed", type=int, default=0)
    p.add_argument("--model")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--persistence", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("episode", help="run one closed-loop control episode")
    common(p)
    p.add_argument("--goal-seed", type=int, default=0)
    p.add_argument("--t-max", type=int, default=15)
    p.add_argument("--model")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--persistence", action="store_true")
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--stick-opposite", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_episode)

    p = sub.add_parser("tune-baseline", help="grid-search the baseline step length")
    common(p)
    p.add_argument("--grid", default="0.5,1,2,4,6")
    p.add_argument("--episodes", type=int, default=8)
    p.add_argument("--t-max", type=int, default=15)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_tune_baseline)

    p = sub.add_parser("benchmark", help="compare controllers on paired seeds")
    common(p)
    p.add_argument("--controllers", default="mpc-oracle,baseline")
    p.add_argument("--model")
    p.add_argument("--episodes", type=int, default=30)
    p.add_argument("--t-max", type=int, default=15)
    p.add_argument("--stick-opposite", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_benchmark)

    p = sub.add_parser("report", help="re-emit tables and plots from report.json")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - map to documented exit categories
        for types, code in _EXIT_CODES:
            if isinstance(exc, types):
                print(f"error: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
