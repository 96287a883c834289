"""Command-line interface.

Subcommands: train, eval, enumerate-tasks, gradcheck, dump-beliefs, expert,
smooth. Report paths render matplotlib figures to files next to the CSV/JSONL
output they summarize.
"""

from __future__ import annotations

import argparse
import csv
import pickle
import sys
import time
from pathlib import Path

import numpy as np

from ..agents import Agent, AgentSpec
from ..envs import ENV_KINDS, make_env
from ..envs.numpad import enumerate_tasks
from .config import ExperimentConfig
from .evaluate import REGIMES, dump_belief_marginals, evaluate
from .expert import train_expert
from .gradcheck import run_gradient_suite
from .metrics import MetricSeries, smooth_curve
from .run import load_checkpoint, run_experiment


def _agent_from_checkpoint(path: str) -> tuple[Agent, dict]:
    ck = load_checkpoint(path)
    spec = AgentSpec.from_dict(ck["agent"]["spec"])
    agent = Agent(spec, seed=0)
    agent.load_state_dict(ck["agent"])
    return agent, ck


def _env_from_checkpoint(ck: dict):
    section = dict(ck["resolved_config"]["env"])
    name = section.pop("name")
    return make_env(name, **section)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    config = ExperimentConfig.from_yaml(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.output_dir is not None:
        config.output_dir = args.output_dir
    artifacts = run_experiment(config, resume_from=args.resume)
    print(f"run complete: {artifacts.run_dir} (config {artifacts.config_hash})")
    if artifacts.metrics.rows:
        last = artifacts.metrics.rows[-1]
        ret = last.get("return_mean20")
        if ret is not None:
            print(f"final mean return (last 20 episodes): {ret:.3f}")
        if "eval_return" in last:
            print(f"final evaluation return: {last['eval_return']:.3f} "
                  f"± {last.get('eval_stderr', 0.0):.3f}")
    print(f"metrics: {artifacts.metrics_csv}")
    for fig in artifacts.figure_paths:
        print(f"figure: {fig}")
    print(f"checkpoint: {artifacts.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    agent, ck = _agent_from_checkpoint(args.checkpoint)
    env = _env_from_checkpoint(ck)
    rng = np.random.default_rng(args.seed)
    result = evaluate(agent, env, split=args.split, regime=args.regime,
                      n_episodes=args.episodes, rng=rng, act_mode=args.mode)
    print(result)
    return 0


def cmd_enumerate_tasks(args) -> int:
    if args.env == "numpad":
        tasks = enumerate_tasks(args.max_len)
        print(f"numpad tasks with sequence length <= {args.max_len}: {len(tasks)}")
        if args.list:
            for task in tasks:
                print(",".join(str(t) for t in task.tiles()))
        return 0
    env = make_env(args.env)
    train = env.split.tasks("train")
    val = env.split.tasks("validation")
    print(f"{args.env}: {len(train)} train / {len(val)} validation tasks (sampled split)")
    if args.list:
        for task in train:
            print("train", task)
        for task in val:
            print("validation", task)
    return 0


def cmd_gradcheck(args) -> int:
    start = time.perf_counter()
    try:
        results = run_gradient_suite(seed=args.seed, rel_tol=args.tol,
                                     max_entries=args.max_entries)
    except AssertionError as exc:
        print(f"FAIL: {exc}")
        return 1
    for res in results:
        print(res)
    total = time.perf_counter() - start
    worst = max(res.max_rel_err for res in results)
    print(f"all {len(results)} checks passed "
          f"(worst rel err {worst:.3e}, {total:.1f}s)")
    return 0


def cmd_dump_beliefs(args) -> int:
    agent, ck = _agent_from_checkpoint(args.checkpoint)
    env = _env_from_checkpoint(ck)
    if args.regime != "fully-hidden":
        if getattr(env, "kind", None) != "numpad":
            print(f"regime {args.regime!r} only applies to the numpad env",
                  file=sys.stderr)
            return 1
        env.cue_regime = args.regime
    rng = np.random.default_rng(args.seed)
    records = dump_belief_marginals(agent, env, rng, n_episodes=args.episodes,
                                    split=args.split)

    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    n_bins = records[0]["marginals"].shape[1]
    header = (["episode", "step", "factor", "lo", "hi"]
              + [f"p{j}" for j in range(n_bins)] + ["true_log_prob"])
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in records:
            for f in range(rec["marginals"].shape[0]):
                writer.writerow(
                    [rec["episode"], rec["step"], f,
                     f"{rec['lo'][f]:.6g}", f"{rec['hi'][f]:.6g}"]
                    + [f"{p:.8g}" for p in rec["marginals"][f]]
                    + [f"{rec['true_log_prob']:.8g}"])
    print(f"wrote {out} ({len(records)} steps, {args.episodes} episodes)")

    if not args.no_figures:
        from .report import belief_marginals_figure, hinton_figure
        first = [r for r in records if r["episode"] == 0]
        stack = np.stack([r["marginals"] for r in first])
        fig1 = belief_marginals_figure(stack, out.with_name(out.stem + "_marginals.png"))
        fig2 = hinton_figure(first[-1]["marginals"],
                             out.with_name(out.stem + "_final_belief.png"))
        print(f"figure: {fig1}")
        print(f"figure: {fig2}")
    return 0


def cmd_expert(args) -> int:
    env = make_env(args.env)
    tasks = env.split.tasks(args.split)
    if not 0 <= args.task_index < len(tasks):
        print(f"task index {args.task_index} outside 0..{len(tasks) - 1}",
              file=sys.stderr)
        return 1
    task = tasks[args.task_index]
    result = train_expert(env, task, seed=args.seed, budget=args.budget)
    print(f"expert on {args.env}[{args.split}#{args.task_index}]: "
          f"mean return {result.mean_return:.3f} "
          f"({result.n_train_steps} training steps)")
    if args.output is not None:
        payload = {
            "agent": result.policy.agent.state_dict(),
            "env": {"name": args.env},
            "split": args.split,
            "task_index": args.task_index,
            "mean_return": result.mean_return,
        }
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "wb") as fh:
            pickle.dump(payload, fh)
        print(f"saved expert to {out}")
    return 0


def cmd_smooth(args) -> int:
    series = MetricSeries.from_csv(args.input)
    values = [v for v in series.column(args.column)
              if isinstance(v, (int, float))]
    if not values:
        print(f"column {args.column!r} has no numeric values", file=sys.stderr)
        return 1
    smoothed = smooth_curve(values, args.window)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", args.column, "smoothed"])
        for i, (raw, sm) in enumerate(zip(values, smoothed)):
            writer.writerow([i, f"{raw:.8g}", f"{sm:.8g}"])
    print(f"wrote {out} ({len(values)} rows, window {args.window})")
    if args.figure is not None:
        from .report import smoothed_curve_figure
        fig = smoothed_curve_figure(values, args.window, args.figure,
                                    label=args.column)
        print(f"figure: {fig}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beliefrl",
        description="Meta-RL as task inference: train, evaluate, and inspect "
                    "belief-state agents on the benchmark suite.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run an experiment from a YAML config")
    p.add_argument("config", help="path to the experiment YAML")
    p.add_argument("--resume", default=None, metavar="CKPT",
                   help="checkpoint to resume from")
    p.add_argument("--seed", type=int, default=None, help="override the seed")
    p.add_argument("--output-dir", default=None, help="override output_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpointed agent")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--split", default="validation",
                   choices=("train", "validation"))
    p.add_argument("--regime", default="fully-hidden", choices=REGIMES)
    p.add_argument("--mode", default="sample", choices=("sample", "mean"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("enumerate-tasks",
                       help="count (and list) an env's task space")
    p.add_argument("--env", required=True, choices=sorted(ENV_KINDS))
    p.add_argument("--max-len", type=int, default=4,
                   help="numpad: maximum sequence length")
    p.add_argument("--list", action="store_true", help="print every task")
    p.set_defaults(func=cmd_enumerate_tasks)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check every layer, head, and loss")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-entries", type=int, default=20,
                   help="parameter entries probed per tensor")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dump-beliefs",
                       help="write per-step belief marginals to CSV (+ figures)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--split", default="validation",
                   choices=("train", "validation"))
    p.add_argument("--regime", default="fully-hidden", choices=REGIMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="CSV output path")
    p.add_argument("--no-figures", action="store_true",
                   help="skip the marginal/Hinton figures")
    p.set_defaults(func=cmd_dump_beliefs)

    p = sub.add_parser("expert", help="train a known-task expert policy")
    p.add_argument("--env", required=True, choices=sorted(ENV_KINDS))
    p.add_argument("--split", default="train", choices=("train", "validation"))
    p.add_argument("--task-index", type=int, default=0)
    p.add_argument("--budget", type=int, default=400,
                   help="behavior-cloning gradient steps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None, help="pickle the trained expert")
    p.set_defaults(func=cmd_expert)

    p = sub.add_parser("smooth", help="moving-average a metrics CSV column")
    p.add_argument("--input", required=True, help="metrics CSV path")
    p.add_argument("--column", default="episode_return")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--output", required=True, help="smoothed CSV path")
    p.add_argument("--figure", default=None,
                   help="also render the smoothed curve to this file")
    p.set_defaults(func=cmd_smooth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
