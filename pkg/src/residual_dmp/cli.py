"""Command-line entry point.

Subcommands: ``fit``, ``rollout``, ``train``, ``eval``, ``transfer``,
``spiral-demo``, ``report``.  Global flags ``--config/--seed/--out/--episodes``
apply across subcommands; a config file is flat ``key = value`` lines with
``#`` comments, overriding experiment settings by field name.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from .dmp import fit_from_demo, rollout
from .env import TASK_PRESETS
from .experiments import (
    ExperimentSpec,
    emit_outputs,
    run_ablation,
    run_fullpose_comparison,
    run_locus_comparison,
    run_strategy_comparison,
    run_transfer,
    spiral_exploration_contrast,
)
from .orientation import fit_orientation_dmp
from .policies import ExplorationLocus
from .runner import NeuralAgent, build_task, evaluate
from .serialize import (
    load_dmp_params,
    read_trajectory_csv,
    save_dmp_params,
    write_trajectory_csv,
)
from .train import load_learner, save_learner, train_episodic, train_ppo, train_sac

EXPERIMENTS = ("locus", "strategy", "ablation", "fullpose", "transfer")


def parse_config_file(path: str) -> dict:
    """Flat ``key = value`` pairs; later keys win, ``#`` starts a comment."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def _coerce(value: str, target_type):
    if target_type is bool:
        return value.lower() in ("1", "true", "yes", "on")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def apply_config(spec: ExperimentSpec, overrides: dict) -> ExperimentSpec:
    updates = {}
    fields = {f.name: f for f in dataclasses.fields(ExperimentSpec)}
    for key, value in overrides.items():
        if key not in fields:
            raise ValueError(f"unknown config key {key!r}")
        if key in ("seeds", "tasks"):
            parts = [p.strip() for p in value.split(",") if p.strip()]
            updates[key] = tuple(int(p) for p in parts) if key == "seeds" else tuple(parts)
        else:
            current = getattr(spec, key)
            updates[key] = _coerce(value, type(current))
    return dataclasses.replace(spec, **updates)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="residual-dmp",
        description="Full-pose DMPs with residual corrections on a toy insertion benchmark",
    )
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out")
    parser.add_argument("--episodes", type=int, help="override the training budget")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit DMP parameters from a demo CSV")
    p_fit.add_argument("--demo", required=True)
    p_fit.add_argument("--n-basis", type=int, default=40)
    p_fit.add_argument("--n-basis-orientation", type=int, default=70)

    p_roll = sub.add_parser("rollout", help="replay fitted parameters to a CSV")
    p_roll.add_argument("--params", required=True)
    p_roll.add_argument("--duration", type=float)
    p_roll.add_argument("--dt", type=float, default=0.01)
    p_roll.add_argument("--start", help="comma-separated start position")

    p_train = sub.add_parser("train", help="train a residual policy on a task")
    p_train.add_argument("--task", required=True, choices=TASK_PRESETS)
    p_train.add_argument("--locus", default="task-space",
                         choices=[l.value for l in ExplorationLocus])
    p_train.add_argument("--residual", default="sac",
                         choices=("sac", "ppo", "episodic"))
    p_train.add_argument("--reward", default="sparse", choices=("sparse", "exp-l1"))
    p_train.add_argument("--full-pose", action="store_true")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a task")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--task", required=True, choices=TASK_PRESETS)
    p_eval.add_argument("-n", "--n-episodes", type=int, default=100)

    p_tr = sub.add_parser("transfer", help="few-shot transfer between tasks")
    p_tr.add_argument("--source", default="gear", choices=TASK_PRESETS)
    p_tr.add_argument("--target", default="rj45", choices=TASK_PRESETS)
    p_tr.add_argument("--k-updates", type=int, default=3)

    sub.add_parser("spiral-demo", help="emit the four spiral exploration variants")

    p_rep = sub.add_parser("report", help="run an experiment family and emit tables")
    p_rep.add_argument("--experiment", required=True, choices=EXPERIMENTS)

    return parser


def _spec_from_args(args) -> ExperimentSpec:
    spec = ExperimentSpec(seeds=(args.seed, args.seed + 1, args.seed + 2))
    if args.config:
        spec = apply_config(spec, parse_config_file(args.config))
    if args.episodes:
        spec = dataclasses.replace(
            spec,
            episode_budget=args.episodes,
            ppo_episode_budget=args.episodes,
            episodic_budget=args.episodes,
            pure_budget=args.episodes,
        )
    return spec


def cmd_fit(args) -> int:
    demo, quats = read_trajectory_csv(args.demo)
    params = fit_from_demo(demo, args.n_basis)
    orientation = None
    if quats is not None:
        orientation = fit_orientation_dmp(quats, demo.dt, args.n_basis_orientation)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "dmp_params.json"
    save_dmp_params(path, params, orientation)
    print(f"wrote {path}")
    return 0


def cmd_rollout(args) -> int:
    params, _ = load_dmp_params(args.params)
    start = None
    if args.start:
        start = np.array([float(v) for v in args.start.split(",")])
    traj = rollout(params, start=start, duration=args.duration, dt=args.dt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "rollout.csv"
    write_trajectory_csv(path, traj)
    print(f"wrote {path}")
    return 0


def cmd_train(args, spec: ExperimentSpec) -> int:
    setup = build_task(args.task, gate_fraction=spec.gate_fraction)
    locus = ExplorationLocus.from_string(args.locus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    episodes = args.episodes or spec.episode_budget
    if args.residual == "episodic":
        learner, curve = train_episodic(
            setup, episodes, args.seed, locus, reward_kind=args.reward
        )
        np.save(out / f"episodic_{args.task}_{args.seed}.npy", learner.mean)
        ckpt_msg = f"episodic mean -> episodic_{args.task}_{args.seed}.npy"
    else:
        train_fn = train_sac if args.residual == "sac" else train_ppo
        learner, curve = train_fn(
            setup, episodes, args.seed, locus=locus, full_pose=args.full_pose
        )
        path = out / f"{args.residual}_{args.task}_{args.seed}"
        save_learner(path, learner, {
            "task": args.task, "locus": args.locus, "full_pose": args.full_pose,
            "bounds": {"translation": setup.bounds.translation,
                       "rotation": setup.bounds.rotation},
        })
        ckpt_msg = f"checkpoint -> {path}.json"
    curve_path = out / f"curve_{args.residual}_{args.task}_{args.seed}.csv"
    lines = ["episode,return,success,peak_force,radius"]
    for e in range(curve.n_episodes):
        lines.append(
            f"{e},{curve.returns[e]:.6g},{int(curve.successes[e])},"
            f"{curve.peak_forces[e]:.6g},{curve.radii[e]:.6g}"
        )
    curve_path.write_text("\n".join(lines) + "\n")
    print(ckpt_msg)
    print(f"curve -> {curve_path}")
    return 0


def cmd_eval(args, spec: ExperimentSpec) -> int:
    learner, manifest = load_learner(args.checkpoint)
    setup = build_task(args.task, gate_fraction=spec.gate_fraction)
    agent = NeuralAgent(
        learner, setup.bounds, bool(manifest.get("full_pose", False)), deterministic=True
    )
    stats = evaluate(setup, agent, args.n_episodes, args.seed)
    rate = stats.success_rate
    stderr = math.sqrt(max(rate * (1.0 - rate), 0.0) / max(stats.n, 1))
    print(f"success: {100 * rate:.1f}% +/- {100 * stderr:.1f}% over {stats.n} episodes")
    print(f"mean insertion time: {stats.mean_insertion_time:.2f}s")
    print(f"mean peak force: {stats.mean_peak_force:.2f}N")
    return 0


def cmd_spiral_demo(args) -> int:
    result = spiral_exploration_contrast(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = {"none": "A", "coupling": "B", "parameter": "C", "task": "D"}
    for name, traj in result["trajectories"].items():
        path = out / f"spiral_{labels[name]}_{name}.csv"
        write_trajectory_csv(path, traj)
        print(f"wrote {path} (max jerk {result['max_jerk'][name]:.3g})")
    return 0


def cmd_report(args, spec: ExperimentSpec) -> int:
    runners = {
        "locus": run_locus_comparison,
        "strategy": run_strategy_comparison,
        "ablation": run_ablation,
        "transfer": lambda s: run_transfer(s),
    }
    if args.experiment == "fullpose":
        table, bins = run_fullpose_comparison(spec)
        written = emit_outputs([table] + list(bins.values()), None, args.out, args.seed)
    else:
        table, curves = runners[args.experiment](spec)
        written = emit_outputs([table], curves, args.out, args.seed)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_transfer(args, spec: ExperimentSpec) -> int:
    table, curves = run_transfer(spec, args.source, args.target, args.k_updates)
    written = emit_outputs([table], curves, args.out, args.seed)
    for path in written:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        spec = _spec_from_args(args)
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "rollout":
            return cmd_rollout(args)
        if args.command == "train":
            return cmd_train(args, spec)
        if args.command == "eval":
            return cmd_eval(args, spec)
        if args.command == "transfer":
            return cmd_transfer(args, spec)
        if args.command == "spiral-demo":
            return cmd_spiral_demo(args)
        if args.command == "report":
            return cmd_report(args, spec)
        parser.error(f"unknown command {args.command!r}")
        return 2
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
