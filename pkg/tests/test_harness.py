"""Harness tests: config, metrics, evaluation, experts, runner, CLI, report."""

import math
import pickle

import numpy as np
import pytest
import yaml

from beliefrl.envs import make_env
from beliefrl.harness import (ExperimentConfig, MetricSeries,
                              bandit_uniform_reference, capture_behavior,
                              derive_belief_head, dump_belief_marginals,
                              evaluate, label_expert_actions,
                              make_thompson_controller, oracle_controller,
                              run_experiment, run_gradient_suite, smooth_curve,
                              train_expert)
from beliefrl.harness.cli import main
from beliefrl.harness.report import (belief_marginals_figure, hinton_figure,
                                     learning_curves_figure, sweep_figure)
from beliefrl.harness.run import load_checkpoint


# ---------------------------------------------------------------------------
# helpers


def velocity_config(output_dir, seed=11, total=4, **run_overrides):
    run = {"total_iterations": total, "figures": False, **run_overrides}
    return ExperimentConfig.from_dict({
        "name": "t", "seed": seed, "output_dir": str(output_dir),
        "env": {"name": "velocity", "horizon": 20},
        "agent": {"architecture": "belief",
                  "actor": {"encoder": [8], "lstm": None, "layer_norm": False},
                  "critic": {"encoder": [8], "lstm": 6, "layer_norm": False},
                  "belief": {"encoder": [8], "lstm": 6, "layer_norm": False}},
        "learner": {"algorithm": "svg0-td0", "unroll_length": 10,
                    "batch_size": 4, "n_train_iters": 2},
        "run": run,
    })


def rows_equal(rows_a, rows_b, exclude=("wall_clock",)):
    """Row-by-row equality with NaN == NaN and volatile columns excluded."""
    if len(rows_a) != len(rows_b):
        return False
    for ra, rb in zip(rows_a, rows_b):
        keys_a = set(ra) - set(exclude)
        keys_b = set(rb) - set(exclude)
        if keys_a != keys_b:
            return False
        for k in keys_a:
            va, vb = ra[k], rb[k]
            if isinstance(va, float) and isinstance(vb, float):
                if math.isnan(va) and math.isnan(vb):
                    continue
            if va != vb:
                return False
    return True


def params_equal(agent_a, agent_b):
    pa = agent_a.state_dict()["params"]
    pb = agent_b.state_dict()["params"]
    for role, d in pa.items():
        if d is None:
            if pb[role] is not None:
                return False
            continue
        for k, v in d.items():
            other = pb[role][k]
            if isinstance(v, np.ndarray):
                if not np.array_equal(v, other):
                    return False
            elif v != other:
                return False
    return True


# ---------------------------------------------------------------------------
# config


def test_config_rejects_unknown_top_level_keys():
    with pytest.raises(ValueError, match="unknown top-level"):
        ExperimentConfig.from_dict({"envs": {"name": "bandit"}})


def test_config_validate_collects_problems():
    cfg = ExperimentConfig.from_dict({
        "env": {"name": "bandit", "n_legs": 3},
        "agent": {"architecture": "belief", "actuator": {}},
        "learner": {"algorithm": "ppo"},
        "run": {"workers": 4},
    })
    problems = cfg.validate()
    text = "\n".join(problems)
    assert "n_legs" in text
    assert "actuator" in text
    assert "workers" in text  # PPO is on-policy: must be single-worker


def test_config_validate_unknown_env():
    cfg = ExperimentConfig.from_dict({"env": {"name": "gridworld"}})
    assert any("gridworld" in p for p in cfg.validate())


def test_valid_config_has_no_problems(tmp_path):
    assert velocity_config(tmp_path).validate() == []


def test_preset_merges_and_user_overrides_win():
    cfg = ExperimentConfig.from_dict({
        "preset": "full-scale",
        "env": {"name": "velocity"},
        "learner": {"unroll_length": 25},
    })
    assert cfg.learner["batch_size"] == 512  # from preset
    assert cfg.learner["unroll_length"] == 25  # user override
    assert cfg.agent["critic"]["lstm"] == 300
    assert cfg.run["workers"] == 4


def test_config_yaml_roundtrip(tmp_path):
    cfg = velocity_config(tmp_path / "run")
    path = cfg.to_yaml(tmp_path / "cfg.yaml")
    again = ExperimentConfig.from_yaml(path)
    assert again.resolved() == cfg.resolved()
    assert again.config_hash() == cfg.config_hash()


def test_config_hash_ignores_name_and_output_dir(tmp_path):
    a = velocity_config(tmp_path / "a")
    b = velocity_config(tmp_path / "b")
    b.name = "other"
    assert a.config_hash() == b.config_hash()
    c = velocity_config(tmp_path / "a", seed=12)
    assert a.config_hash() != c.config_hash()


def test_derive_belief_head_matches_env_targets():
    bandit = make_env("bandit", n_arms=5)
    assert derive_belief_head(bandit, "task-description", {}) == \
        {"kind": "beta", "dim": 5}
    semi = make_env("semicircle")
    head = derive_belief_head(semi, "task-description", {})
    assert head["kind"] == "binned"
    numpad = make_env("numpad")
    head = derive_belief_head(numpad, "task-description", {})
    assert head["kind"] == "factored" and head["k"] == 4 and head["c"] == 10
    assert derive_belief_head(bandit, "task-id", {})["kind"] == "categorical"
    assert derive_belief_head(semi, "task-embedding", {"embed_dim": 8}) == \
        {"kind": "gaussian", "dim": 8}


# ---------------------------------------------------------------------------
# metrics


def test_metric_series_requires_increasing_iteration():
    m = MetricSeries()
    m.append(iteration=1, loss=0.5)
    with pytest.raises(ValueError, match="increase"):
        m.append(iteration=1, loss=0.4)
    with pytest.raises(ValueError, match="iteration"):
        m.append(loss=0.4)


def test_metric_series_csv_jsonl_roundtrip(tmp_path):
    m = MetricSeries()
    m.append(iteration=1, loss=0.5, note="warm")
    m.append(iteration=2, loss=0.25, extra=7)
    csv_path = m.to_csv(tmp_path / "m.csv")
    jsonl_path = m.to_jsonl(tmp_path / "m.jsonl")
    from_csv = MetricSeries.from_csv(csv_path)
    from_jsonl = MetricSeries.from_jsonl(jsonl_path)
    assert from_csv.rows == m.rows
    assert from_jsonl.rows == m.rows
    assert from_csv.columns() == ["iteration", "loss", "note", "extra"]
    assert from_csv.column("extra") == [7]  # missing cells skipped


def test_smooth_curve_examples():
    np.testing.assert_allclose(smooth_curve([3.0, 3.0, 3.0], 2),
                               [3.0, 3.0, 3.0])
    np.testing.assert_allclose(smooth_curve([1.0, 2.0, 3.0], 1),
                               [1.0, 2.0, 3.0])
    np.testing.assert_allclose(smooth_curve([0.0, 10.0], 2), [0.0, 5.0])
    out = smooth_curve(list(range(10)), 4)
    assert out[-1] == pytest.approx(np.mean([6, 7, 8, 9]))
    with pytest.raises(ValueError):
        smooth_curve([], 3)
    with pytest.raises(ValueError):
        smooth_curve([1.0], 0)


# ---------------------------------------------------------------------------
# evaluation


def test_evaluate_same_seed_identical():
    env = make_env("bandit", n_arms=3, horizon=10, n_train=20, n_val=20)
    cfg = ExperimentConfig.from_dict({
        "env": {"name": "bandit", "n_arms": 3, "horizon": 10,
                "n_train": 20, "n_val": 20},
        "agent": {"architecture": "belief",
                  "actor": {"encoder": [8], "lstm": None, "layer_norm": False},
                  "critic": {"encoder": [8], "lstm": 6, "layer_norm": False},
                  "belief": {"encoder": [8], "lstm": 6, "layer_norm": False}},
        "learner": {"algorithm": "ppo"},
    })
    agent = cfg.build_agent(env)
    r1 = evaluate(agent, env, n_episodes=4, rng=np.random.default_rng(5))
    r2 = evaluate(agent, env, n_episodes=4, rng=np.random.default_rng(5))
    np.testing.assert_array_equal(r1.returns, r2.returns)
    assert r1.stderr == pytest.approx(
        np.std(r1.returns, ddof=1) / np.sqrt(len(r1.returns)))


def test_evaluate_regime_errors():
    env = make_env("bandit", n_arms=3, horizon=5, n_train=10, n_val=10)
    cfg = ExperimentConfig.from_dict({
        "env": {"name": "bandit", "n_arms": 3, "horizon": 5,
                "n_train": 10, "n_val": 10},
        "agent": {"architecture": "belief",
                  "actor": {"encoder": [8], "lstm": None, "layer_norm": False},
                  "critic": {"encoder": [8], "lstm": 6, "layer_norm": False},
                  "belief": {"encoder": [8], "lstm": 6, "layer_norm": False}},
        "learner": {"algorithm": "ppo"},
    })
    agent = cfg.build_agent(env)
    with pytest.raises(ValueError, match="regime"):
        evaluate(agent, env, regime="half-visible", n_episodes=2,
                 rng=np.random.default_rng(0))
    with pytest.raises(ValueError, match="numpad"):
        evaluate(agent, env, regime="fully-visible", n_episodes=2,
                 rng=np.random.default_rng(0))


def test_evaluate_numpad_regimes_restore_env_setting():
    env = make_env("numpad", horizon=20)
    cfg = ExperimentConfig.from_dict({
        "env": {"name": "numpad", "horizon": 20},
        "agent": {"architecture": "belief",
                  "actor": {"encoder": [8], "lstm": None, "layer_norm": False},
                  "critic": {"encoder": [8], "lstm": 6, "layer_norm": False},
                  "belief": {"encoder": [8], "lstm": 6, "layer_norm": False}},
    })
    agent = cfg.build_agent(env)
    before = env.cue_regime
    res = evaluate(agent, env, regime="fully-visible", n_episodes=2,
                   rng=np.random.default_rng(0))
    assert env.cue_regime == before
    assert res.regime == "fully-visible"


def test_bandit_uniform_reference_exact():
    env = make_env("bandit", n_arms=4, horizon=10, n_train=30, n_val=30)
    expected = 10 * float(np.mean(
        [np.mean(t.probs) for t in env.split.tasks("validation")]))
    assert bandit_uniform_reference(env, split="validation") == \
        pytest.approx(expected)


def test_thompson_capture_behavior_metrics():
    env = make_env("semicircle", horizon=40)
    rng = np.random.default_rng(4)
    task = env.split.tasks("validation")[0]
    controller = make_thompson_controller(env, rng)
    behavior = capture_behavior(controller, env, task, rng, max_episodes=4)
    assert 1 <= behavior.episodes_to_first_capture <= 5
    assert 0.0 <= behavior.sweep_coverage <= 1.0
    if behavior.captured:
        assert behavior.episodes_to_first_capture <= 4


# ---------------------------------------------------------------------------
# experts


def test_bandit_oracle_plays_best_arm_constantly():
    env = make_env("bandit", n_arms=4, horizon=5, n_train=10, n_val=10)
    task = env.split.tasks("train")[0]
    controller = oracle_controller(env, task)
    best = int(np.argmax(task.probs))
    state, obs = env.reset(task, np.random.default_rng(0))
    for _ in range(5):
        assert controller(state, obs) == best


def test_train_expert_bandit_near_optimal():
    env = make_env("bandit", n_arms=4, horizon=50, n_train=10, n_val=10)
    task = env.split.tasks("train")[0]
    result = train_expert(env, task, seed=0, budget=80, n_episodes=6,
                          measure_episodes=6)
    assert result.mean_return >= 0.8 * 50 * max(task.probs)


def test_train_expert_semicircle_captures():
    env = make_env("semicircle", horizon=60)
    task = env.split.tasks("train")[0]
    result = train_expert(env, task, seed=1, budget=150, n_episodes=6,
                          measure_episodes=4)
    assert result.mean_return >= 1.0  # reaches the target every episode


def test_label_expert_actions_deterministic():
    env = make_env("bandit", n_arms=3, horizon=20, n_train=10, n_val=10)
    task = env.split.tasks("train")[1]
    result = train_expert(env, task, seed=0, budget=60, n_episodes=5,
                          measure_episodes=2)
    obs = np.random.default_rng(0).normal(size=(6, env.obs_dim))
    a1 = label_expert_actions(result.policy, obs)
    a2 = label_expert_actions(result.policy, obs)
    np.testing.assert_array_equal(a1, a2)
    assert a1.dtype == np.int64


# ---------------------------------------------------------------------------
# gradcheck


def test_gradient_suite_passes():
    results = run_gradient_suite(seed=0, max_entries=4)
    assert len(results) >= 20
    names = {r.name for r in results}
    assert any(n.startswith("layer/lstm") for n in names)
    assert any(n.startswith("loss/ppo") for n in names)
    assert max(r.max_rel_err for r in results) < 1e-4


# ---------------------------------------------------------------------------
# runner


def test_run_experiment_rejects_invalid_config(tmp_path):
    cfg = ExperimentConfig.from_dict({"env": {"name": "nope"},
                                      "output_dir": str(tmp_path)})
    with pytest.raises(RuntimeError, match="nope"):
        run_experiment(cfg)
    assert not (tmp_path / "config.yaml").exists()  # no partial artifacts


def test_sync_run_is_bit_reproducible(tmp_path):
    a = run_experiment(velocity_config(tmp_path / "a"))
    b = run_experiment(velocity_config(tmp_path / "b"))
    assert rows_equal(a.metrics.rows, b.metrics.rows)
    assert params_equal(a.agent, b.agent)


def test_run_artifacts_on_disk(tmp_path):
    art = run_experiment(velocity_config(tmp_path / "run", total=3,
                                         eval_every=2, eval_episodes=2,
                                         figures=True))
    assert art.run_dir.joinpath("config.yaml").exists()
    assert art.metrics_csv.exists() and art.metrics_jsonl.exists()
    assert art.checkpoint_path.exists()
    assert art.figure_paths and art.figure_paths[0].exists()
    saved = yaml.safe_load(art.run_dir.joinpath("config.yaml").read_text())
    assert saved["config_hash"] == art.config_hash
    assert saved["seed"] == 11
    again = MetricSeries.from_csv(art.metrics_csv)
    assert rows_equal(again.rows, art.metrics.rows, exclude=())


def test_checkpoint_resume_matches_uninterrupted(tmp_path):
    full = run_experiment(velocity_config(tmp_path / "full", total=6,
                                          checkpoint_every=3, eval_every=2,
                                          eval_episodes=2))
    ckpt = tmp_path / "full" / "checkpoints" / "ckpt_000003.pkl"
    assert ckpt.exists()
    resumed = run_experiment(velocity_config(tmp_path / "resumed", total=6,
                                             checkpoint_every=3, eval_every=2,
                                             eval_episodes=2),
                             resume_from=ckpt)
    assert rows_equal(full.metrics.rows, resumed.metrics.rows)
    assert params_equal(full.agent, resumed.agent)


def test_resume_refuses_other_config(tmp_path):
    art = run_experiment(velocity_config(tmp_path / "a", total=2,
                                         checkpoint_every=1))
    other = velocity_config(tmp_path / "b", total=2, seed=99,
                            checkpoint_every=1)
    with pytest.raises(RuntimeError, match="hash"):
        run_experiment(other, resume_from=art.checkpoint_path)


def test_evaluation_does_not_perturb_training(tmp_path):
    quiet = run_experiment(velocity_config(tmp_path / "quiet", total=4))
    chatty = run_experiment(velocity_config(tmp_path / "chatty", total=4,
                                            eval_every=1, eval_episodes=3))
    assert params_equal(quiet.agent, chatty.agent)


def test_async_run_collects_and_learns(tmp_path):
    cfg = velocity_config(tmp_path / "async", total=3, workers=2,
                          min_replay_entries=2)
    art = run_experiment(cfg)
    assert len(art.metrics.rows) == 3
    last = art.metrics.rows[-1]
    assert last["transitions"] > 0
    assert math.isfinite(last["policy_loss"])
    ck = load_checkpoint(art.checkpoint_path)
    assert ck["replay"]["total_pushed"] > 0


def test_ppo_run_end_to_end(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "seed": 5, "output_dir": str(tmp_path / "ppo"),
        "env": {"name": "bandit", "n_arms": 3, "horizon": 10,
                "n_train": 30, "n_val": 30},
        "agent": {"architecture": "belief",
                  "actor": {"encoder": [16], "lstm": None, "layer_norm": False},
                  "critic": {"encoder": [16], "lstm": 8, "layer_norm": False},
                  "belief": {"encoder": [16], "lstm": 8, "layer_norm": False}},
        "learner": {"algorithm": "ppo", "ppo_epochs": 2},
        "run": {"total_iterations": 3, "episodes_per_iteration": 4,
                "figures": False},
    })
    art = run_experiment(cfg)
    assert len(art.metrics.rows) == 3
    assert all(math.isfinite(r["episode_return"]) for r in art.metrics.rows)
    resumed = run_experiment(
        ExperimentConfig.from_dict({**cfg.__dict__,
                                    "output_dir": str(tmp_path / "ppo2")}),
        resume_from=art.checkpoint_path)
    assert len(resumed.metrics.rows) == 3  # final checkpoint: nothing to redo
    assert params_equal(art.agent, resumed.agent)


def test_task_id_supervision_runs(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "seed": 2, "output_dir": str(tmp_path / "tid"),
        "env": {"name": "velocity", "horizon": 20, "n_train": 8, "n_val": 8},
        "agent": {"architecture": "belief", "target_kind": "task-id",
                  "actor": {"encoder": [8], "lstm": None, "layer_norm": False},
                  "critic": {"encoder": [8], "lstm": 6, "layer_norm": False},
                  "belief": {"encoder": [8], "lstm": 6, "layer_norm": False}},
        "learner": {"algorithm": "svg0-td0", "unroll_length": 10,
                    "batch_size": 4, "n_train_iters": 1},
        "run": {"total_iterations": 3, "figures": False},
    })
    assert cfg.validate() == []
    assert cfg.agent_spec(cfg.build_env()).belief_head == \
        {"kind": "categorical", "n": 8}
    art = run_experiment(cfg)
    nlls = [r["belief_nll"] for r in art.metrics.rows
            if not math.isnan(r.get("belief_nll", math.nan))]
    assert nlls and all(math.isfinite(v) for v in nlls)


# ---------------------------------------------------------------------------
# belief dumps


def numpad_agent_and_env():
    cfg = ExperimentConfig.from_dict({
        "env": {"name": "numpad", "horizon": 15},
        "agent": {"architecture": "belief",
                  "actor": {"encoder": [8], "lstm": None, "layer_norm": False},
                  "critic": {"encoder": [8], "lstm": 6, "layer_norm": False},
                  "belief": {"encoder": [8], "lstm": 6, "layer_norm": False}},
    })
    env = cfg.build_env()
    return cfg.build_agent(env), env


def test_dump_belief_marginals_numpad():
    agent, env = numpad_agent_and_env()
    records = dump_belief_marginals(agent, env, np.random.default_rng(0),
                                    n_episodes=2)
    assert len(records) == 2 * 15
    for rec in records:
        assert rec["marginals"].shape == (4, 10)
        np.testing.assert_allclose(rec["marginals"].sum(axis=-1), 1.0,
                                   atol=1e-6)
        assert math.isfinite(rec["true_log_prob"])


def test_dump_belief_marginals_gaussian_head_sums_to_one():
    env = make_env("velocity", horizon=10)
    cfg = ExperimentConfig.from_dict({
        "env": {"name": "velocity", "horizon": 10},
        "agent": {"architecture": "belief",
                  "actor": {"encoder": [8], "lstm": None, "layer_norm": False},
                  "critic": {"encoder": [8], "lstm": 6, "layer_norm": False},
                  "belief": {"encoder": [8], "lstm": 6, "layer_norm": False}},
    })
    agent = cfg.build_agent(env)
    records = dump_belief_marginals(agent, env, np.random.default_rng(1),
                                    n_episodes=1)
    for rec in records:
        np.testing.assert_allclose(rec["marginals"].sum(axis=-1), 1.0,
                                   atol=1e-6)
        assert rec["lo"].shape == (1,) and rec["hi"].shape == (1,)


def test_dump_belief_marginals_rejects_baseline():
    cfg = ExperimentConfig.from_dict({
        "env": {"name": "velocity", "horizon": 10},
        "agent": {"architecture": "baseline",
                  "actor": {"encoder": [8], "lstm": 6, "layer_norm": False},
                  "critic": {"encoder": [8], "lstm": 6, "layer_norm": False}},
    })
    env = cfg.build_env()
    agent = cfg.build_agent(env)
    with pytest.raises(ValueError, match="baseline"):
        dump_belief_marginals(agent, env, np.random.default_rng(0),
                              n_episodes=1)


# ---------------------------------------------------------------------------
# report figures


def test_learning_curves_figure(tmp_path):
    m = MetricSeries()
    for i in range(12):
        m.append(iteration=i + 1, episode_return=float(i),
                 policy_loss=1.0 / (i + 1), critic_loss=0.5,
                 belief_nll=2.0 - 0.1 * i, entropy=1.0)
    out = learning_curves_figure(m, tmp_path / "curves.png")
    assert out.exists() and out.stat().st_size > 0


def test_belief_and_sweep_figures(tmp_path):
    rng = np.random.default_rng(0)
    marg = rng.dirichlet(np.ones(10), size=(6, 4))
    p1 = belief_marginals_figure(marg, tmp_path / "marginals.png",
                                 true_codes=np.array([1, 2, 3, 4]))
    p2 = hinton_figure(marg[-1], tmp_path / "hinton.png")
    paths = [np.cumsum(rng.normal(scale=0.02, size=(30, 2)), axis=0)
             for _ in range(3)]
    p3 = sweep_figure(paths, tmp_path / "sweep.png", target=(0.1, 0.17))
    for p in (p1, p2, p3):
        assert p.exists() and p.stat().st_size > 0
    with pytest.raises(ValueError):
        belief_marginals_figure(marg[0], tmp_path / "bad.png")


# ---------------------------------------------------------------------------
# CLI


def write_cli_config(tmp_path):
    cfg = {
        "name": "cli", "seed": 9, "output_dir": str(tmp_path / "run"),
        "env": {"name": "velocity", "horizon": 20},
        "agent": {"architecture": "belief",
                  "actor": {"encoder": [8], "lstm": None, "layer_norm": False},
                  "critic": {"encoder": [8], "lstm": 6, "layer_norm": False},
                  "belief": {"encoder": [8], "lstm": 6, "layer_norm": False}},
        "learner": {"algorithm": "svg0-td0", "unroll_length": 10,
                    "batch_size": 4, "n_train_iters": 1},
        "run": {"total_iterations": 2, "figures": False},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_cli_train_eval_dump_smooth(tmp_path, capsys):
    cfg_path = write_cli_config(tmp_path)
    assert main(["train", str(cfg_path)]) == 0
    out = capsys.readouterr().out
    assert "run complete" in out
    ckpt = tmp_path / "run" / "checkpoints" / "final.pkl"
    assert ckpt.exists()

    assert main(["eval", "--checkpoint", str(ckpt), "--episodes", "2"]) == 0
    assert "validation/fully-hidden" in capsys.readouterr().out

    beliefs = tmp_path / "beliefs.csv"
    assert main(["dump-beliefs", "--checkpoint", str(ckpt), "--episodes", "1",
                 "--output", str(beliefs)]) == 0
    capsys.readouterr()
    header = beliefs.read_text().splitlines()[0].split(",")
    assert header[:3] == ["episode", "step", "factor"]
    assert header[-1] == "true_log_prob"
    assert beliefs.with_name("beliefs_marginals.png").exists()

    smoothed = tmp_path / "sm.csv"
    assert main(["smooth", "--input", str(tmp_path / "run" / "metrics.csv"),
                 "--column", "critic_loss", "--window", "2",
                 "--output", str(smoothed)]) == 0
    capsys.readouterr()
    assert smoothed.read_text().splitlines()[0] == "index,critic_loss,smoothed"


def test_cli_enumerate_tasks(capsys):
    assert main(["enumerate-tasks", "--env", "numpad", "--max-len", "2"]) == 0
    assert "48" in capsys.readouterr().out


def test_cli_expert(tmp_path, capsys):
    out_path = tmp_path / "expert.pkl"
    assert main(["expert", "--env", "bandit", "--task-index", "0",
                 "--budget", "40", "--output", str(out_path)]) == 0
    assert "mean return" in capsys.readouterr().out
    payload = pickle.loads(out_path.read_bytes())
    assert payload["env"] == {"name": "bandit"}
    assert "agent" in payload


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--max-entries", "2"]) == 0
    assert "checks passed" in capsys.readouterr().out
