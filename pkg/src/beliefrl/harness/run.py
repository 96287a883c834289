"""Experiment runner: one validated config in, a run directory of artifacts out.

Layout of a run directory:

    <output_dir>/
        config.yaml          resolved config + config hash
        metrics.csv          one row per learner iteration
        metrics.jsonl        same rows, one JSON object per line
        checkpoints/         periodic + final checkpoints (pickle)
        figures/             report figures (when run.figures is on)

Synchronous runs (run.workers == 1) are bit-reproducible given the seed and
resume exactly from any checkpoint. Asynchronous runs use N collection
worker threads feeding one learner thread through the replay buffer; workers
act on atomically-published parameter snapshots. Evaluation episodes never
touch the replay buffer.
"""

from __future__ import annotations

import math
import pickle
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..agents import Agent, pretrain_task_embedding
from ..learners import (Collector, LearnerConfig, collect_rollout, ppo_update,
                        single_threaded_loop, stack_batch, svg0_update)
from ..replay import ReplayBuffer
from .config import ExperimentConfig, RunConfig
from .evaluate import evaluate, online_belief_nll
from .metrics import MetricSeries


@dataclass
class RunArtifacts:
    """Everything a finished run hands back, with its on-disk locations."""

    run_dir: Path
    config_hash: str
    resolved_config: dict
    metrics: MetricSeries
    agent: Agent
    checkpoint_path: Path
    metrics_csv: Path
    metrics_jsonl: Path
    figure_paths: list[Path] = field(default_factory=list)


# ---------------------------------------------------------------------------
# belief supervision targets


def _task_info_fn(config: ExperimentConfig, env, rng: np.random.Generator):
    """Build the Collector's supervision-target function for target_kind.

    Returns None for the default (task-description) so callers can fall back
    to the learner default. Expert-action supervision needs per-task expert
    policies and is only available programmatically via
    `learners.Collector(task_info_fn=expert.expert_task_info_fn(...))`.
    """
    kind = config.agent.get("target_kind", "task-description")
    if kind == "task-description":
        return None
    if kind == "expert-action":
        raise RuntimeError(
            "expert-action supervision requires per-task expert policies; "
            "train them with harness.expert.train_expert and pass "
            "expert.expert_task_info_fn(experts) to learners.Collector directly")
    train_tasks = env.split.tasks("train")
    index = {repr(task): i for i, task in enumerate(train_tasks)}
    if kind == "task-id":
        def task_id_info(env, task, t, obs):
            return np.array([index[repr(task)]], dtype=np.float64)
        return task_id_info
    # task-embedding: pretrain a multitask policy on the train split and use
    # its per-task IB activations as regression targets.
    embed_dim = int(config.agent.get("embed_dim", 16))
    episodes = int(config.agent.get("pretrain_episodes", 300))
    table, _ = pretrain_task_embedding(env, list(train_tasks), rng,
                                       embed_dim=embed_dim, episodes=episodes)

    def task_embedding_info(env, task, t, obs):
        return table[index[repr(task)]]

    return task_embedding_info


# ---------------------------------------------------------------------------
# checkpointing


def _save_checkpoint(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(payload, fh)
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return pickle.load(fh)


def _restore_replay(saved: dict) -> ReplayBuffer:
    buf = ReplayBuffer(saved["capacity"])
    for entry in saved["entries"]:
        buf.push(entry)
    buf.total_pushed = saved["total_pushed"]
    return buf


def _copy_state(state: dict) -> dict:
    """Deep-copy an agent state dict (parameter arrays included)."""
    def copy_pset(d):
        return {k: (v.copy() if isinstance(v, np.ndarray) else v)
                for k, v in d.items()}

    return {"spec": state["spec"],
            "params": {role: (None if pset is None else copy_pset(pset))
                       for role, pset in state["params"].items()}}


# ---------------------------------------------------------------------------
# shared per-iteration bookkeeping


class _Recorder:
    """Appends one metrics row per iteration and handles eval/checkpoint
    cadences and periodic flushing of metrics files."""

    def __init__(self, run_dir: Path, config_hash: str, resolved: dict,
                 rcfg: RunConfig, agent: Agent, eval_env,
                 eval_rng: np.random.Generator, metrics: MetricSeries):
        self.run_dir = run_dir
        self.config_hash = config_hash
        self.resolved = resolved
        self.rcfg = rcfg
        self.agent = agent
        self.eval_env = eval_env
        self.eval_rng = eval_rng
        self.metrics = metrics
        self.start_time = time.perf_counter()
        self.checkpoint_extra = None  # callable returning mode-specific state

    def row(self, iteration: int, step: int, transitions: int,
            episode_return: float, return_mean20: float, report) -> dict:
        values = {
            "iteration": iteration,
            "step": step,
            "transitions": transitions,
            "episode_return": episode_return,
            "return_mean20": return_mean20,
        }
        if report is not None:
            values.update(report.to_dict())
        if self.rcfg.eval_every and iteration % self.rcfg.eval_every == 0:
            res = evaluate(self.agent, self.eval_env, split=self.rcfg.eval_split,
                           n_episodes=self.rcfg.eval_episodes, rng=self.eval_rng)
            values["eval_return"] = res.mean_return
            values["eval_stderr"] = res.stderr
            if self.agent.spec.architecture == "belief":
                values["online_belief_nll"] = online_belief_nll(
                    self.agent, self.eval_env, self.eval_rng,
                    n_episodes=min(self.rcfg.eval_episodes, 10),
                    split=self.rcfg.eval_split)
        values["wall_clock"] = time.perf_counter() - self.start_time
        self.metrics.append(**values)
        if (self.rcfg.checkpoint_every
                and iteration % self.rcfg.checkpoint_every == 0):
            self.save_checkpoint(iteration, step, transitions,
                                 self.run_dir / "checkpoints" / f"ckpt_{iteration:06d}.pkl")
        return values

    def checkpoint_payload(self, iteration: int, step: int,
                           transitions: int) -> dict:
        payload = {
            "config_hash": self.config_hash,
            "resolved_config": self.resolved,
            "iteration": iteration,
            "step": step,
            "transitions": transitions,
            "agent": self.agent.state_dict(),
            "eval_rng": self.eval_rng.bit_generator.state,
            "metrics_rows": [dict(r) for r in self.metrics.rows],
        }
        if self.checkpoint_extra is not None:
            payload.update(self.checkpoint_extra())
        return payload

    def save_checkpoint(self, iteration: int, step: int, transitions: int,
                        path: Path) -> Path:
        _save_checkpoint(path, self.checkpoint_payload(iteration, step, transitions))
        self.flush_metrics()
        return path

    def flush_metrics(self) -> None:
        self.metrics.to_csv(self.run_dir / "metrics.csv")
        self.metrics.to_jsonl(self.run_dir / "metrics.jsonl")


def _window_mean(returns: list[float], window: int = 20) -> float:
    if not returns:
        return math.nan
    return float(np.mean(returns[-window:]))


# ---------------------------------------------------------------------------
# the three run modes


def _run_sync_svg(config, env, agent, lcfg, rcfg, recorder, train_rng, info_fn,
                  checkpoint: dict | None, start_iteration: int, start_step: int):
    if checkpoint is not None and "replay" in checkpoint:
        replay = _restore_replay(checkpoint["replay"])
    else:
        replay = ReplayBuffer(rcfg.replay_capacity)
    collector = Collector(env, agent, train_rng, replay, lcfg.unroll_length,
                          task_info_fn=info_fn)
    if checkpoint is not None and "collector" in checkpoint:
        collector.load_state_dict(checkpoint["collector"])
        train_rng.bit_generator.state = checkpoint["train_rng"]

    recorder.checkpoint_extra = lambda: {
        "train_rng": train_rng.bit_generator.state,
        "replay": {"capacity": replay.capacity,
                   "total_pushed": replay.total_pushed,
                   "entries": replay.snapshot()},
        "collector": collector.state_dict(),
    }

    returns_seen = len(collector.episode_returns)

    def on_iteration(it, step, col, report):
        nonlocal returns_seen
        iteration = start_iteration + it + 1
        new = col.episode_returns[returns_seen:]
        returns_seen = len(col.episode_returns)
        recorder.row(iteration, step, iteration * lcfg.unroll_length,
                     float(np.mean(new)) if new else math.nan,
                     _window_mean(col.episode_returns), report)

    n_remaining = rcfg.total_iterations - start_iteration
    single_threaded_loop(env, agent, lcfg, train_rng, n_remaining,
                         replay=replay, on_iteration=on_iteration,
                         start_step=start_step, collector=collector)
    last = recorder.metrics.rows[-1] if recorder.metrics.rows else {}
    return int(last.get("step", start_step)), int(last.get("transitions", 0))


def _run_ppo(config, env, agent, lcfg, rcfg, recorder, train_rng, info_fn,
             checkpoint: dict | None, start_iteration: int, start_step: int):
    if checkpoint is not None:
        train_rng.bit_generator.state = checkpoint["train_rng"]
    step = start_step
    transitions = checkpoint["transitions"] if checkpoint is not None else 0
    recent: list[float] = list(checkpoint["recent_returns"]) if checkpoint else []
    recorder.checkpoint_extra = lambda: {
        "train_rng": train_rng.bit_generator.state,
        "recent_returns": recent[-20:],
    }
    for it in range(start_iteration, rcfg.total_iterations):
        rollout = collect_rollout(env, agent, train_rng,
                                  n_episodes=rcfg.episodes_per_iteration,
                                  task_info_fn=info_fn)
        report = ppo_update(rollout, agent, lcfg, train_rng)
        step += lcfg.ppo_epochs
        transitions += rollout.n_steps
        episode_returns = rollout.rewards.sum(axis=1)
        recent.extend(float(r) for r in episode_returns)
        del recent[:-20]
        recorder.row(it + 1, step, transitions,
                     float(episode_returns.mean()), _window_mean(recent), report)
    return step, transitions


def _run_async_svg(config, env, agent, lcfg, rcfg, recorder, train_rng, info_fn,
                   worker_seeds, checkpoint: dict | None,
                   start_iteration: int, start_step: int):
    """N collection threads -> shared replay -> one learner (this thread).

    Parameter snapshots are deep copies published under a lock; workers load
    them atomically before each unroll. Asynchronous runs resume from
    checkpoints with fresh collector state (only sync runs resume exactly).
    """
    if checkpoint is not None and "replay" in checkpoint:
        replay = _restore_replay(checkpoint["replay"])
    else:
        replay = ReplayBuffer(rcfg.replay_capacity)
    if checkpoint is not None:
        train_rng.bit_generator.state = checkpoint["train_rng"]

    snapshot = {"version": 0, "state": _copy_state(agent.state_dict())}
    snapshot_lock = threading.Lock()
    stop = threading.Event()
    errors: list[BaseException] = []
    steps_by_worker = [0] * len(worker_seeds)
    collectors: list[Collector] = []

    def publish():
        with snapshot_lock:
            snapshot["version"] += 1
            snapshot["state"] = _copy_state(agent.state_dict())

    def worker(idx: int, seed) -> None:
        try:
            wenv = config.build_env()
            wrng = np.random.default_rng(seed)
            wagent = Agent(config.agent_spec(wenv), seed=config.seed)
            col = Collector(wenv, wagent, wrng, replay, lcfg.unroll_length,
                            task_info_fn=info_fn)
            collectors.append(col)
            seen = -1
            while not stop.is_set():
                with snapshot_lock:
                    if snapshot["version"] != seen:
                        wagent.load_state_dict(snapshot["state"])
                        seen = snapshot["version"]
                for _ in range(lcfg.unroll_length):
                    col.step()
                    steps_by_worker[idx] += 1
        except BaseException as exc:  # surface worker failures to the learner
            errors.append(exc)
            stop.set()

    recorder.checkpoint_extra = lambda: {
        "train_rng": train_rng.bit_generator.state,
        "replay": {"capacity": replay.capacity,
                   "total_pushed": replay.total_pushed,
                   "entries": replay.snapshot()},
    }

    threads = [threading.Thread(target=worker, args=(i, s), daemon=True)
               for i, s in enumerate(worker_seeds)]
    for t in threads:
        t.start()
    step = start_step
    try:
        while len(replay) < rcfg.min_replay_entries:
            if errors:
                raise RuntimeError("collection worker failed") from errors[0]
            time.sleep(0.005)
        for it in range(start_iteration, rcfg.total_iterations):
            if errors:
                raise RuntimeError("collection worker failed") from errors[0]
            report = None
            for _ in range(lcfg.n_train_iters):
                batch = stack_batch(replay.sample_uniform(lcfg.batch_size, train_rng))
                step += 1
                report = svg0_update(batch, agent, lcfg, train_rng, step,
                                     update_belief=False)
            batch = stack_batch(replay.sample_uniform(lcfg.batch_size, train_rng))
            brep = svg0_update(batch, agent, lcfg, train_rng, step,
                               update_actor_critic=False)
            if report is not None:
                report.belief_nll = brep.belief_nll
                report.ib_kl_belief = brep.ib_kl_belief
                report.grad_norm_belief = brep.grad_norm_belief
            publish()
            all_returns = [r for col in collectors for r in col.episode_returns]
            recorder.row(it + 1, step, sum(steps_by_worker),
                         math.nan, _window_mean(all_returns), report)
    finally:
        stop.set()
        for t in threads:
            t.join(timeout=10.0)
    if errors:
        raise RuntimeError("collection worker failed") from errors[0]
    return step, sum(steps_by_worker)


# ---------------------------------------------------------------------------
# entry point


def run_experiment(config: ExperimentConfig,
                   resume_from: str | Path | None = None) -> RunArtifacts:
    """Run one experiment end to end and return its artifacts.

    Raises RuntimeError listing every config problem before any work starts.
    With `resume_from`, continues from the checkpoint (which must carry the
    same config hash); synchronous runs continue bit-exactly.
    """
    problems = config.validate()
    if problems:
        raise RuntimeError("invalid experiment config:\n- " + "\n- ".join(problems))

    resolved = config.resolved()
    config_hash = config.config_hash()
    run_dir = Path(config.output_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.yaml", "w") as fh:
        yaml.safe_dump({"config_hash": config_hash, **resolved}, fh,
                       sort_keys=False)

    env = config.build_env()
    eval_env = config.build_env()
    agent = config.build_agent(env)
    lcfg = config.learner_config()
    rcfg = config.run_config()

    seeds = np.random.SeedSequence(config.seed).spawn(3 + rcfg.workers)
    train_rng = np.random.default_rng(seeds[0])
    eval_rng = np.random.default_rng(seeds[1])
    # Supervision targets (task-id map / task-embedding pretraining) draw from
    # their own stream so resuming recomputes the identical targets.
    info_fn = _task_info_fn(config, env, np.random.default_rng(seeds[2]))

    metrics = MetricSeries()
    checkpoint = None
    start_iteration = 0
    start_step = 0
    if resume_from is not None:
        checkpoint = load_checkpoint(resume_from)
        if checkpoint["config_hash"] != config_hash:
            raise RuntimeError(
                f"checkpoint config hash {checkpoint['config_hash']} does not "
                f"match this config ({config_hash}); refusing to resume")
        agent.load_state_dict(checkpoint["agent"])
        eval_rng.bit_generator.state = checkpoint["eval_rng"]
        for row in checkpoint["metrics_rows"]:
            metrics.append(**row)
        start_iteration = checkpoint["iteration"]
        start_step = checkpoint["step"]

    recorder = _Recorder(run_dir, config_hash, resolved, rcfg, agent,
                         eval_env, eval_rng, metrics)

    if lcfg.algorithm == "ppo":
        step, transitions = _run_ppo(config, env, agent, lcfg, rcfg, recorder,
                                     train_rng, info_fn, checkpoint,
                                     start_iteration, start_step)
    elif rcfg.workers == 1:
        step, transitions = _run_sync_svg(config, env, agent, lcfg, rcfg,
                                          recorder, train_rng, info_fn,
                                          checkpoint, start_iteration,
                                          start_step)
    else:
        step, transitions = _run_async_svg(config, env, agent, lcfg, rcfg,
                                           recorder, train_rng, info_fn,
                                           seeds[3:], checkpoint,
                                           start_iteration, start_step)

    final_path = recorder.save_checkpoint(
        rcfg.total_iterations, step, transitions,
        run_dir / "checkpoints" / "final.pkl")

    figure_paths: list[Path] = []
    if rcfg.figures:
        from .report import render_run_report
        figure_paths = render_run_report(run_dir)

    return RunArtifacts(
        run_dir=run_dir,
        config_hash=config_hash,
        resolved_config=resolved,
        metrics=metrics,
        agent=agent,
        checkpoint_path=final_path,
        metrics_csv=run_dir / "metrics.csv",
        metrics_jsonl=run_dir / "metrics.jsonl",
        figure_paths=figure_paths,
    )
