"""Experiment families: locus comparison, strategy comparison, ablations,
full-pose necessity, transfer, and the spiral exploration contrast.

Every experiment is deterministic given (spec, seeds): results are reported
as mean plus standard error over seeds, and each row records the episode
budget it consumed (``eff``) and the reward type it trained with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dmp import DmpParams, Trajectory, fit_from_demo, rollout
from .demos import make_spiral_demo
from .env import ToyInsertionEnv
from .policies import ActionBounds, ExplorationLocus
from .ppo import PpoConfig, PpoLearner
from .runner import (
    LinearAgent,
    NeuralAgent,
    RandomAgent,
    TaskSetup,
    ZeroAgent,
    build_task,
    evaluate,
)
from .sac import SacConfig
from .train import (
    CurriculumPlan,
    TrainCurve,
    pure_rl_env_config,
    train_episodic,
    train_ppo,
    train_sac,
)

SPARSE_LABEL = "1[L2<=kappa]"
EXP_L1_LABEL = "exp{-L1}"
DENSE_LABEL = "-(a*L1 + b/(L2-eps))"


@dataclass(frozen=True)
class ExperimentSpec:
    """Shared experiment settings; individual runs override the budgets."""

    name: str = "experiment"
    tasks: Tuple[str, ...] = ("easy", "hard")
    seeds: Tuple[int, ...] = (0, 1, 2)
    episode_budget: int = 700
    ppo_episode_budget: int = 2000
    episodic_budget: int = 2000
    pure_budget: int = 2000
    eval_episodes: int = 100
    gate_fraction: float = 0.5
    mirror_paper_rewards: bool = True


@dataclass
class ResultTable:
    """Rows of condition metrics with a fixed column order."""

    name: str
    columns: List[str]
    rows: List[Dict[str, object]] = field(default_factory=list)

    def add(self, **kwargs) -> None:
        self.rows.append(kwargs)

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_format_cell(row.get(c, "")) for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        md = [f"### {self.name}", ""]
        md.append("| " + " | ".join(self.columns) + " |")
        md.append("|" + "|".join("---" for _ in self.columns) + "|")
        if not self.rows:
            md.append("| no data " + "| " * (len(self.columns) - 1) + "|")
        for row in self.rows:
            md.append(
                "| " + " | ".join(_format_cell(row.get(c, "")) for c in self.columns) + " |"
            )
        return "\n".join(md) + "\n"

    def column(self, name: str) -> List[object]:
        return [row.get(name) for row in self.rows]

    def row_by(self, condition: str) -> Dict[str, object]:
        for row in self.rows:
            if row.get("condition") == condition:
                return row
        raise KeyError(condition)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def mean_stderr(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def _pct(stats_rate: float) -> float:
    return 100.0 * stats_rate


# -- Fig. 2 analog: exploration smoothness contrast --------------------------


def spiral_exploration_contrast(
    seed: int = 0,
    target_deviation: float = 0.005,
    n_basis: int = 40,
    hook_every: int = 10,
) -> dict:
    """Perturb a fitted spiral at each locus with matched positional noise
    power and compare per-step jerk statistics.

    Returns the four trajectories (A: none, B: coupling, C: parameter,
    D: task space), the calibrated noise scales, and the max-jerk table.
    """
    demo = make_spiral_demo()
    params = fit_from_demo(demo, n_basis)
    duration, dt = demo.duration, demo.dt
    baseline = rollout(params, duration=duration, dt=dt, internal_dt=dt / 2)

    def run(locus: ExplorationLocus, sigma: float, run_seed: int) -> Trajectory:
        rng = np.random.default_rng(np.random.SeedSequence([seed, run_seed]))
        weight_noise = (
            sigma * rng.standard_normal(params.weights.shape)
            if locus is ExplorationLocus.PARAMETER_SPACE
            else None
        )
        every = hook_every

        if locus is ExplorationLocus.COUPLING_TERM:
            # per-decision resampled force target, rate-bridged by linear
            # interpolation so the injected acceleration stays continuous
            ramp = {"prev": np.zeros(params.n_dims),
                    "next": sigma * rng.standard_normal(params.n_dims),
                    "count": 0}

            def hook(t, state):
                i = ramp["count"]
                ramp["count"] += 1
                if i % every == 0 and i > 0:
                    ramp["prev"] = ramp["next"]
                    ramp["next"] = sigma * rng.standard_normal(params.n_dims)
                frac = (i % every) / every
                eta = (1.0 - frac) * ramp["prev"] + frac * ramp["next"]
                return None, state.s.s * eta, None

            return rollout(
                params, duration=duration, dt=dt, injection_hook=hook,
                hook_every=1, internal_dt=dt / 2,
            )

        def hook(t, state):
            if locus is ExplorationLocus.PARAMETER_SPACE:
                return weight_noise, None, None
            if locus is ExplorationLocus.TASK_SPACE:
                return None, None, sigma * rng.standard_normal(params.n_dims)
            return None, None, None

        return rollout(
            params, duration=duration, dt=dt, injection_hook=hook,
            hook_every=every, internal_dt=dt / 2,
        )

    def rms_deviation(traj: Trajectory) -> float:
        return float(np.sqrt(np.mean(np.sum((traj.pos - baseline.pos) ** 2, axis=1))))

    loci = {
        "coupling": ExplorationLocus.COUPLING_TERM,
        "parameter": ExplorationLocus.PARAMETER_SPACE,
        "task": ExplorationLocus.TASK_SPACE,
    }
    probe = {"coupling": 1.0, "parameter": 1.0, "task": 0.01}
    trajectories = {"none": baseline}
    sigmas, jerks = {}, {"none": max_step_jerk(baseline)}
    for i, (label, locus) in enumerate(loci.items()):
        dev = rms_deviation(run(locus, probe[label], 100 + i))
        sigma = probe[label] * target_deviation / max(dev, 1e-12)
        traj = run(locus, sigma, 100 + i)
        trajectories[label] = traj
        sigmas[label] = sigma
        jerks[label] = max_step_jerk(traj)
    return {
        "trajectories": trajectories,
        "sigmas": sigmas,
        "max_jerk": jerks,
        "target_deviation": target_deviation,
    }


def max_step_jerk(traj: Trajectory) -> float:
    """Max finite-difference jerk; velocity discontinuities dominate it."""
    acc = np.diff(traj.vel, axis=0) / traj.dt
    jerk = np.diff(acc, axis=0) / traj.dt
    return float(np.max(np.linalg.norm(jerk, axis=1)))


# -- Table I analog: exploration locus comparison ----------------------------


def run_locus_comparison(spec: ExperimentSpec) -> Tuple[ResultTable, Dict[str, List[TrainCurve]]]:
    """Train one learner per locus on the easy task, evaluate on easy+hard."""
    table = ResultTable(
        "locus_comparison",
        ["condition", "locus", "easy", "easy_stderr", "hard", "hard_stderr",
         "average", "eff", "reward"],
    )
    setup_easy = build_task("easy", gate_fraction=spec.gate_fraction)
    setup_hard = build_task("hard", gate_fraction=spec.gate_fraction)
    curves: Dict[str, List[TrainCurve]] = {}
    episodic_reward = "exp-l1" if spec.mirror_paper_rewards else "sparse"
    episodic_label = EXP_L1_LABEL if spec.mirror_paper_rewards else SPARSE_LABEL

    conditions = [
        ("none", ExplorationLocus.NONE, "n/a", 0, "n/a"),
        ("coupling-term", ExplorationLocus.COUPLING_TERM, episodic_label,
         spec.episodic_budget, "episodic"),
        ("parameter-space", ExplorationLocus.PARAMETER_SPACE, episodic_label,
         spec.episodic_budget, "episodic"),
        ("task-space", ExplorationLocus.TASK_SPACE, SPARSE_LABEL,
         spec.episode_budget, "sac"),
    ]
    for condition, locus, reward_label, budget, learner_kind in conditions:
        per_seed = {"easy": [], "hard": []}
        curves[condition] = []
        for seed in spec.seeds:
            if learner_kind == "episodic":
                learner, curve = train_episodic(
                    setup_easy, budget, seed, locus, reward_kind=episodic_reward
                )
                curves[condition].append(curve)
                for label, setup in (("easy", setup_easy), ("hard", setup_hard)):
                    stats = evaluate(
                        setup, None, spec.eval_episodes, seed,
                        locus=locus, episodic_learner=learner,
                    )
                    per_seed[label].append(_pct(stats.success_rate))
            elif learner_kind == "sac":
                learner, curve = train_sac(setup_easy, budget, seed, locus=locus)
                curves[condition].append(curve)
                agent = NeuralAgent(learner, setup_easy.bounds, False, deterministic=True)
                for label, setup in (("easy", setup_easy), ("hard", setup_hard)):
                    stats = evaluate(setup, agent, spec.eval_episodes, seed, locus=locus)
                    per_seed[label].append(_pct(stats.success_rate))
            else:
                for label, setup in (("easy", setup_easy), ("hard", setup_hard)):
                    stats = evaluate(setup, ZeroAgent(), spec.eval_episodes, seed)
                    per_seed[label].append(_pct(stats.success_rate))
        easy_m, easy_s = mean_stderr(per_seed["easy"])
        hard_m, hard_s = mean_stderr(per_seed["hard"])
        table.add(
            condition=condition, locus=locus.value, easy=easy_m, easy_stderr=easy_s,
            hard=hard_m, hard_stderr=hard_s, average=(easy_m + hard_m) / 2.0,
            eff=budget if budget else "n/a", reward=reward_label,
        )
    return table, curves


# -- Table II analog: adaptive strategy comparison ---------------------------


def run_strategy_comparison(spec: ExperimentSpec) -> Tuple[ResultTable, Dict[str, List[TrainCurve]]]:
    """Random / Linear / SAC / PPO residuals in task space, half-episode gate."""
    table = ResultTable(
        "strategy_comparison",
        ["condition", "easy", "easy_stderr", "hard", "hard_stderr", "average",
         "eff", "reward"],
    )
    setup_easy = build_task("easy", gate_fraction=spec.gate_fraction)
    setup_hard = build_task("hard", gate_fraction=spec.gate_fraction)
    curves: Dict[str, List[TrainCurve]] = {}

    def eval_both(agent_factory, seed, locus=ExplorationLocus.TASK_SPACE):
        out = {}
        for label, setup in (("easy", setup_easy), ("hard", setup_hard)):
            stats = evaluate(setup, agent_factory(setup), spec.eval_episodes, seed, locus=locus)
            out[label] = _pct(stats.success_rate)
        return out

    for condition in ("random", "linear", "sac", "ppo"):
        per_seed = {"easy": [], "hard": []}
        curves[condition] = []
        for seed in spec.seeds:
            if condition == "random":
                rates = eval_both(lambda s: RandomAgent(s.bounds), seed)
                eff, reward_label = "n/a", "n/a"
            elif condition == "linear":
                rates = eval_both(lambda s: LinearAgent(s.bounds), seed)
                eff, reward_label = "n/a", "n/a"
            elif condition == "sac":
                learner, curve = train_sac(setup_easy, spec.episode_budget, seed)
                curves[condition].append(curve)
                rates = eval_both(
                    lambda s: NeuralAgent(learner, s.bounds, False, deterministic=True), seed
                )
                eff, reward_label = spec.episode_budget, SPARSE_LABEL
            else:
                learner, curve = train_ppo(setup_easy, spec.ppo_episode_budget, seed)
                curves[condition].append(curve)
                rates = eval_both(
                    lambda s: NeuralAgent(learner, s.bounds, False, deterministic=True), seed
                )
                eff, reward_label = spec.ppo_episode_budget, SPARSE_LABEL
            per_seed["easy"].append(rates["easy"])
            per_seed["hard"].append(rates["hard"])
        easy_m, easy_s = mean_stderr(per_seed["easy"])
        hard_m, hard_s = mean_stderr(per_seed["hard"])
        table.add(
            condition=condition, easy=easy_m, easy_stderr=easy_s, hard=hard_m,
            hard_stderr=hard_s, average=(easy_m + hard_m) / 2.0, eff=eff,
            reward=reward_label,
        )
    return table, curves


# -- Table III analog: residual vs pure vs hybrid ----------------------------


def run_ablation(spec: ExperimentSpec) -> Tuple[ResultTable, Dict[str, List[TrainCurve]]]:
    """DMP baseline, pure RL (dense reward), hybrid switching, and residual."""
    table = ResultTable(
        "ablation",
        ["condition", "easy", "easy_stderr", "hard", "hard_stderr", "average",
         "mean_peak_force", "eff", "reward"],
    )
    setup_easy = build_task("easy", gate_fraction=spec.gate_fraction)
    setup_hard = build_task("hard", gate_fraction=spec.gate_fraction)
    curves: Dict[str, List[TrainCurve]] = {}

    conditions = [
        ("dmp", "none", 0, "n/a"),
        ("pure-sac", "pure", spec.pure_budget, DENSE_LABEL),
        ("hybrid-sac", "hybrid", spec.episode_budget, SPARSE_LABEL),
        ("rlfd-sac", "residual", spec.episode_budget, SPARSE_LABEL),
    ]
    for condition, mode, budget, reward_label in conditions:
        per_seed = {"easy": [], "hard": [], "peak": []}
        curves[condition] = []
        for seed in spec.seeds:
            if mode == "none":
                agent = ZeroAgent()
            else:
                env_cfg = pure_rl_env_config(setup_easy) if mode == "pure" else None
                learner, curve = train_sac(
                    setup_easy, budget, seed, mode=mode, env_config=env_cfg
                )
                curves[condition].append(curve)
                bounds = setup_easy.bounds if mode == "residual" else None
                agent = NeuralAgent(
                    learner,
                    bounds if bounds is not None else _pure_bounds(),
                    False,
                    deterministic=True,
                )
            run_mode = "residual" if mode in ("none", "residual") else mode
            for label, setup in (("easy", setup_easy), ("hard", setup_hard)):
                stats = evaluate(setup, agent, spec.eval_episodes, seed, mode=run_mode)
                per_seed[label].append(_pct(stats.success_rate))
                if label == "easy":
                    per_seed["peak"].append(stats.mean_peak_force)
        easy_m, easy_s = mean_stderr(per_seed["easy"])
        hard_m, hard_s = mean_stderr(per_seed["hard"])
        peak_m, _ = mean_stderr(per_seed["peak"])
        table.add(
            condition=condition, easy=easy_m, easy_stderr=easy_s, hard=hard_m,
            hard_stderr=hard_s, average=(easy_m + hard_m) / 2.0,
            mean_peak_force=peak_m, eff=budget if budget else "n/a",
            reward=reward_label,
        )
    return table, curves


def _pure_bounds() -> ActionBounds:
    from .runner import PURE_BOUNDS

    return PURE_BOUNDS


# -- Table IV analog: full pose vs translation only --------------------------

FULLPOSE_CONDITIONS = (
    "none/none",
    "linear/none",
    "ppo/none",
    "linear/random",
    "random/random",
    "ppo/ppo",
)


def run_fullpose_comparison(
    spec: ExperimentSpec,
    tasks: Tuple[str, ...] = ("peg", "gear", "rj45"),
    n_bins: int = 8,
) -> Tuple[ResultTable, Dict[str, ResultTable]]:
    """The translation-only vs full-pose grid on the physical-analog presets."""
    table = ResultTable(
        "fullpose_comparison",
        ["condition"] + list(tasks) + [f"{t}_stderr" for t in tasks] + ["average", "eff"],
    )
    bins: Dict[str, ResultTable] = {}
    setups = {
        t: build_task(t, gate_fraction=spec.gate_fraction) for t in tasks
    }
    trained: Dict[Tuple[str, str, int], PpoLearner] = {}

    for condition in FULLPOSE_CONDITIONS:
        per_task: Dict[str, List[float]] = {t: [] for t in tasks}
        eff = "n/a"
        for task in tasks:
            setup = setups[task]
            for seed in spec.seeds:
                agent = None
                if condition == "none/none":
                    agent = ZeroAgent()
                elif condition == "linear/none":
                    agent = LinearAgent(setup.bounds)
                elif condition == "linear/random":
                    agent = LinearAgent(setup.bounds, random_orientation=True)
                elif condition == "random/random":
                    agent = RandomAgent(setup.bounds, full_pose=True)
                else:
                    full_pose = condition == "ppo/ppo"
                    key = (task, condition, seed)
                    if key not in trained:
                        learner, _ = train_ppo(
                            setup, spec.ppo_episode_budget, seed, full_pose=full_pose,
                            curriculum=CurriculumPlan(initial_radius=0.004, increment=0.003),
                        )
                        trained[key] = learner
                    agent = NeuralAgent(
                        trained[key], setup.bounds, full_pose, deterministic=True
                    )
                    eff = spec.ppo_episode_budget
                stats = evaluate(setup, agent, spec.eval_episodes, seed)
                per_task[task].append(_pct(stats.success_rate))
                bin_key = f"{task}_{condition.replace('/', '-')}"
                if bin_key not in bins:
                    bins[bin_key] = _binned_table(bin_key, stats, task, n_bins)
        row = {"condition": condition, "eff": eff}
        means = []
        for t in tasks:
            m, s = mean_stderr(per_task[t])
            row[t] = m
            row[f"{t}_stderr"] = s
            means.append(m)
        row["average"] = float(np.mean(means))
        table.add(**row)
    return table, bins


def _binned_table(name: str, stats, task: str, n_bins: int) -> ResultTable:
    """Success binned by start-offset magnitude (peg) or start angle (others)."""
    t = ResultTable(name, ["bin_center", "n", "success_rate"])
    if task == "peg":
        x = np.linalg.norm(stats.start_offsets, axis=1)
    else:
        x = np.degrees(stats.start_angles)
    if x.size == 0:
        return t
    edges = np.linspace(0.0, float(x.max()) + 1e-9, n_bins + 1)
    for i in range(n_bins):
        mask = (x >= edges[i]) & (x < edges[i + 1])
        rate = float(stats.successes[mask].mean()) if mask.any() else float("nan")
        t.add(bin_center=float(0.5 * (edges[i] + edges[i + 1])), n=int(mask.sum()),
              success_rate=100.0 * rate if mask.any() else "n/a")
    return t


# -- Table VI analog: few-shot transfer ---------------------------------------


def run_transfer(
    spec: ExperimentSpec,
    source: str = "gear",
    target: str = "rj45",
    k_updates: int = 3,
) -> Tuple[ResultTable, Dict[str, List[TrainCurve]]]:
    """Fine-tune a source-task policy on the target with k update steps."""
    ppo_cfg = PpoConfig()
    episodes_per_update = ppo_cfg.batch_episodes
    shot_budget = k_updates * episodes_per_update
    table = ResultTable(
        "transfer",
        ["condition", "target", "success", "success_stderr", "eff"],
    )
    setup_src = build_task(source, gate_fraction=spec.gate_fraction)
    setup_targ = build_task(target, gate_fraction=spec.gate_fraction)
    curves: Dict[str, List[TrainCurve]] = {"full_target": [], "finetune": [], "scratch": []}

    rows = {"full_target": [], "full_source": [], "scratch": [], "finetune": []}
    for seed in spec.seeds:
        full_targ, curve_t = train_ppo(
            setup_targ, spec.ppo_episode_budget, seed, full_pose=True,
            curriculum=CurriculumPlan(initial_radius=0.004, increment=0.003),
        )
        curves["full_target"].append(curve_t)
        full_src, _ = train_ppo(
            setup_src, spec.ppo_episode_budget, seed, full_pose=True,
            curriculum=CurriculumPlan(initial_radius=0.004, increment=0.003),
        )
        scratch, curve_s = train_ppo(
            setup_targ, shot_budget, seed, full_pose=True, curriculum=None
        )
        curves["scratch"].append(curve_s)
        finetuned, curve_f = train_ppo(
            setup_targ, shot_budget, seed, full_pose=True, curriculum=None,
            learner=full_src,
        )
        curves["finetune"].append(curve_f)

        for label, learner in (
            ("full_target", full_targ),
            ("full_source", full_src),
            ("scratch", scratch),
            ("finetune", finetuned),
        ):
            agent = NeuralAgent(learner, setup_targ.bounds, True, deterministic=True)
            stats = evaluate(setup_targ, agent, spec.eval_episodes, seed)
            rows[label].append(_pct(stats.success_rate))

    effs = {
        "full_target": spec.ppo_episode_budget,
        "full_source": spec.ppo_episode_budget,
        "scratch": shot_budget,
        "finetune": shot_budget,
    }
    for label in ("full_target", "full_source", "scratch", "finetune"):
        m, s = mean_stderr(rows[label])
        table.add(condition=label, target=target, success=m, success_stderr=s,
                  eff=effs[label])
    return table, curves


# -- output emission ----------------------------------------------------------


def emit_outputs(
    tables: Sequence[ResultTable],
    curves: Optional[Dict[str, List[TrainCurve]]],
    out_dir,
    seed: Optional[int] = None,
) -> List[Path]:
    """Write per-table CSVs, per-curve CSVs, and a combined markdown report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    report = ["# Experiment report", ""]
    for table in tables:
        path = out / (
            f"{table.name}_{seed}.csv" if seed is not None else f"{table.name}.csv"
        )
        path.write_text(table.to_csv())
        written.append(path)
        report.append(table.to_markdown())
    if not tables:
        report.append("no data\n")
    if curves:
        for name, curve_list in curves.items():
            for i, curve in enumerate(curve_list):
                path = out / f"curve_{name}_{i}.csv"
                lines = ["episode,return,success,peak_force,radius"]
                for e in range(curve.n_episodes):
                    lines.append(
                        f"{e},{curve.returns[e]:.6g},{int(curve.successes[e])},"
                        f"{curve.peak_forces[e]:.6g},{curve.radii[e]:.6g}"
                    )
                path.write_text("\n".join(lines) + "\n")
                written.append(path)
    report_path = out / "report.md"
    report_path.write_text("\n".join(report))
    written.append(report_path)
    return written
