import json
from pathlib import Path

import numpy as np
import pytest

from residual_dmp.cli import main, parse_config_file
from residual_dmp.demos import make_insertion_demo, make_min_jerk_demo
from residual_dmp.dmp import fit_from_demo
from residual_dmp.env import make_task
from residual_dmp.experiments import (
    ExperimentSpec,
    ResultTable,
    emit_outputs,
    max_step_jerk,
    spiral_exploration_contrast,
)
from residual_dmp.orientation import fit_orientation_dmp
from residual_dmp.quaternions import UnitQuaternion, quat_exp
from residual_dmp.runner import NeuralAgent, build_task, evaluate
from residual_dmp.sac import SacConfig, SacLearner
from residual_dmp.serialize import (
    load_dmp_params,
    read_trajectory_csv,
    save_dmp_params,
    write_trajectory_csv,
)
from residual_dmp.train import load_learner, save_learner


class TestSerialize:
    def test_trajectory_round_trip(self, tmp_path):
        demo = make_min_jerk_demo([0.0, 1.0], [1.0, -1.0], 1.0, 0.01)
        path = tmp_path / "demo.csv"
        write_trajectory_csv(path, demo)
        loaded, quats = read_trajectory_csv(path)
        assert quats is None
        assert np.allclose(loaded.pos, demo.pos, atol=1e-10)
        assert np.allclose(loaded.vel, demo.vel, atol=1e-10)

    def test_trajectory_with_quaternions(self, tmp_path):
        cfg = make_task("easy")
        demo, quats = make_insertion_demo(cfg)
        path = tmp_path / "demo_q.csv"
        write_trajectory_csv(path, demo, quats)
        text = path.read_text()
        assert text.startswith("#")
        assert "Shuster" in text
        _, loaded_quats = read_trajectory_csv(path)
        assert len(loaded_quats) == demo.t.size
        assert loaded_quats[0].w == pytest.approx(1.0)

    def test_params_round_trip(self, tmp_path):
        demo = make_min_jerk_demo(0.0, 1.0, 1.0, 0.01)
        params = fit_from_demo(demo, 12)
        quats = [quat_exp(np.array([0.0, 0.0, 0.1 * u])) for u in np.linspace(0, 1, 50)]
        orient = fit_orientation_dmp(quats, 0.01, 10)
        path = tmp_path / "params.json"
        save_dmp_params(path, params, orient)
        t_loaded, o_loaded = load_dmp_params(path)
        assert np.allclose(t_loaded.weights, params.weights)
        assert np.allclose(t_loaded.basis.centers, params.basis.centers)
        assert np.allclose(o_loaded.weights, orient.weights)
        assert o_loaded.g_q.is_unit()

    def test_learner_checkpoint_round_trip(self, tmp_path):
        learner = SacLearner(20, 3, SacConfig(hidden=(8, 8)), seed=5)
        save_learner(tmp_path / "ck", learner, {"task": "easy"})
        loaded, manifest = load_learner(tmp_path / "ck")
        assert manifest["task"] == "easy"
        assert np.array_equal(loaded.get_flat(), learner.get_flat())
        obs = np.zeros(20)
        assert np.array_equal(loaded.mean_action(obs), learner.mean_action(obs))


class TestResultTable:
    def test_csv_and_markdown(self):
        t = ResultTable("demo", ["condition", "value"])
        t.add(condition="a", value=1.25)
        csv = t.to_csv()
        assert csv.splitlines()[0] == "condition,value"
        assert "1.25" in csv
        assert "| a | 1.25 |" in t.to_markdown()

    def test_empty_table_reports_no_data(self):
        t = ResultTable("empty", ["condition"])
        assert "no data" in t.to_markdown()

    def test_emit_outputs_deterministic(self, tmp_path):
        t = ResultTable("numbers", ["condition", "value"])
        t.add(condition="x", value=0.123456789)
        first = emit_outputs([t], None, tmp_path / "a", seed=7)
        second = emit_outputs([t], None, tmp_path / "b", seed=7)
        a = (tmp_path / "a" / "numbers_7.csv").read_bytes()
        b = (tmp_path / "b" / "numbers_7.csv").read_bytes()
        assert a == b
        assert any(p.name == "report.md" for p in first)

    def test_emit_outputs_empty_set(self, tmp_path):
        written = emit_outputs([], None, tmp_path)
        report = (tmp_path / "report.md").read_text()
        assert "no data" in report
        assert written


class TestSpiralContrast:
    def test_task_space_is_jagged_others_smooth(self):
        result = spiral_exploration_contrast(seed=0)
        jerks = result["max_jerk"]
        assert jerks["task"] > jerks["parameter"]
        assert jerks["task"] > jerks["coupling"]
        assert jerks["parameter"] <= 1.5 * jerks["none"]
        assert jerks["coupling"] <= 1.5 * jerks["none"]

    def test_matched_deviation_calibration(self):
        result = spiral_exploration_contrast(seed=0, target_deviation=0.004)
        base = result["trajectories"]["none"]
        for label in ("coupling", "parameter", "task"):
            traj = result["trajectories"][label]
            dev = np.sqrt(np.mean(np.sum((traj.pos - base.pos) ** 2, axis=1)))
            assert dev == pytest.approx(0.004, rel=0.5)

    def test_deterministic_given_seed(self):
        a = spiral_exploration_contrast(seed=3)
        b = spiral_exploration_contrast(seed=3)
        assert a["max_jerk"] == b["max_jerk"]


class TestConfigFile:
    def test_parse_and_comments(self, tmp_path):
        path = tmp_path / "cfg"
        path.write_text("episode_budget = 42  # small\n\n# full line comment\nseeds = 1,2\n")
        parsed = parse_config_file(path)
        assert parsed == {"episode_budget": "42", "seeds": "1,2"}

    def test_malformed_line_raises(self, tmp_path):
        path = tmp_path / "cfg"
        path.write_text("what is this\n")
        with pytest.raises(ValueError):
            parse_config_file(path)


class TestCli:
    def test_fit_then_rollout_pipeline(self, tmp_path):
        demo = make_min_jerk_demo([0.0, 0.0], [0.2, -0.1], 1.0, 0.01)
        demo_path = tmp_path / "demo.csv"
        write_trajectory_csv(demo_path, demo)
        out = tmp_path / "fit_out"
        assert main(["--out", str(out), "fit", "--demo", str(demo_path),
                     "--n-basis", "40"]) == 0
        params_path = out / "dmp_params.json"
        assert params_path.exists()
        assert main(["--out", str(out), "rollout", "--params", str(params_path),
                     "--dt", "0.01"]) == 0
        traj, _ = read_trajectory_csv(out / "rollout.csv")
        assert np.linalg.norm(traj.pos[-1] - demo.pos[-1]) < 2e-3

    def test_spiral_demo_emits_four_variants(self, tmp_path):
        out = tmp_path / "spirals"
        assert main(["--out", str(out), "--seed", "1", "spiral-demo"]) == 0
        names = sorted(p.name for p in out.glob("spiral_*.csv"))
        assert len(names) == 4
        assert any("_A_" in n for n in names) and any("_D_" in n for n in names)

    def test_train_and_eval_smoke(self, tmp_path):
        out = tmp_path / "train_out"
        assert main(["--out", str(out), "--seed", "0", "--episodes", "3",
                     "train", "--task", "easy", "--residual", "sac"]) == 0
        ckpt = out / "sac_easy_0"
        assert ckpt.with_suffix(".json").exists()
        assert main(["--out", str(out), "eval", "--checkpoint", str(ckpt),
                     "--task", "easy", "-n", "5"]) == 0

    def test_unknown_flag_is_usage_error(self):
        assert main(["--bogus-flag", "report"]) == 2

    def test_unknown_config_key_is_runtime_error(self, tmp_path):
        cfg = tmp_path / "cfg"
        cfg.write_text("not_a_field = 7\n")
        out = tmp_path / "o"
        code = main(["--config", str(cfg), "--out", str(out), "spiral-demo"])
        assert code == 1

    def test_missing_demo_file_fails_cleanly(self, tmp_path):
        assert main(["--out", str(tmp_path), "fit", "--demo",
                     str(tmp_path / "nope.csv")]) == 1


class TestEvalDisjointness:
    def test_training_and_eval_streams_differ(self):
        setup = build_task("easy")
        learner = SacLearner(20, 3, SacConfig(hidden=(8,)), seed=0)
        agent = NeuralAgent(learner, setup.bounds, False, deterministic=True)
        eval_stats = evaluate(setup, agent, 10, seed=0)
        # the eval stream is derived from a spawn key, not the raw seed:
        # drawing the same count from the raw seed gives different starts
        raw = np.random.default_rng(0)
        raw_starts = np.array([
            raw.uniform(-setup.config.start_radius, setup.config.start_radius)
            for _ in range(10)
        ])
        assert not np.allclose(raw_starts, eval_stats.start_offsets)
