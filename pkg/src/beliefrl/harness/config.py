"""Experiment configuration: one YAML file describing env, agent, learner, run.

The file carries four sections (plus `name`, `seed`, `output_dir`); key names
inside each section match the corresponding dataclass fields so a config is
self-documenting against the code:

    name: bandit-belief
    seed: 0
    output_dir: runs/bandit-belief
    env:     {name: bandit, n_arms: 10, horizon: 100}
    agent:   {architecture: belief, target_kind: task-description,
              actor: {...}, critic: {...}, belief: {...}}
    learner: {algorithm: ppo, actor_lr: 3e-4, ...}
    run:     {workers: 1, total_iterations: 200, ...}

`validate()` returns the full list of problems (never just the first) so a
bad config fails with everything that needs fixing. `config_hash()` is a
stable digest of the resolved config; it is written into every run artifact.
"""

from __future__ import annotations

import hashlib
import inspect
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from ..agents import ARCHITECTURES, Agent, AgentSpec, NetConfig, TARGET_KINDS
from ..envs import ENV_KINDS, make_env
from ..learners import LearnerConfig

# Desk-scale defaults keep runs CPU-feasible; the full-scale preset restores
# the reference sizes (batch 512, unroll 50, LSTMs 100/300/100, many workers).
PRESETS = {
    "desk": {},
    "full-scale": {
        "learner": {"batch_size": 512, "unroll_length": 50},
        "agent": {
            "actor": {"encoder": [100], "lstm": 100},
            "critic": {"encoder": [300], "lstm": 300},
            "belief": {"encoder": [100], "lstm": 100},
        },
        "run": {"workers": 4},
    },
}

_NETCONFIG_KEYS = {f.name for f in fields(NetConfig)}
_LEARNER_KEYS = {f.name for f in fields(LearnerConfig)}


@dataclass
class RunConfig:
    """Runtime section: workers, budgets, cadences, capacities."""

    workers: int = 1
    total_iterations: int = 100
    episodes_per_iteration: int = 8  # PPO rollout size per update
    replay_capacity: int = 10_000
    eval_every: int = 0  # 0 disables periodic evaluation
    eval_episodes: int = 20
    eval_split: str = "validation"
    checkpoint_every: int = 0  # 0 keeps only the final checkpoint
    min_replay_entries: int = 1  # async learner waits for this many
    figures: bool = True

    def validate(self) -> list[str]:
        problems = []
        if self.workers < 1:
            problems.append("run.workers must be >= 1")
        if self.total_iterations < 1:
            problems.append("run.total_iterations must be >= 1")
        if self.episodes_per_iteration < 1:
            problems.append("run.episodes_per_iteration must be >= 1")
        if self.replay_capacity < 1:
            problems.append("run.replay_capacity must be >= 1")
        if self.eval_every < 0 or self.checkpoint_every < 0:
            problems.append("run cadences must be >= 0 (0 disables)")
        if self.eval_episodes < 1:
            problems.append("run.eval_episodes must be >= 1")
        if self.eval_split not in ("train", "validation"):
            problems.append(f"unknown run.eval_split {self.eval_split!r}")
        return problems


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    output_dir: str = "runs/experiment"
    preset: str = "desk"
    env: dict = field(default_factory=lambda: {"name": "bandit"})
    agent: dict = field(default_factory=lambda: {"architecture": "belief"})
    learner: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)

    # -- I/O -----------------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        # Derived records written by to_yaml/run dirs, not inputs: drop them
        # so a saved config.yaml can be fed straight back in.
        raw = {k: v for k, v in raw.items()
               if k not in ("agent_spec", "config_hash")}
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        preset = PRESETS.get(cfg.preset, {})
        cfg.env = {**preset.get("env", {}), **cfg.env}
        cfg.agent = _merge(preset.get("agent", {}), cfg.agent)
        cfg.learner = {**preset.get("learner", {}), **cfg.learner}
        cfg.run = {**preset.get("run", {}), **cfg.run}
        return cfg

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw)

    def to_yaml(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            yaml.safe_dump(self.resolved(), fh, sort_keys=False)
        return path

    def resolved(self) -> dict:
        """The full config with every default filled in (hashable, writable)."""
        out = asdict(self)
        out["run"] = asdict(self.run_config())
        out["learner"] = asdict(self.learner_config())
        try:
            out["agent_spec"] = self.agent_spec(self.build_env()).to_dict()
        except Exception:
            out["agent_spec"] = None  # invalid configs still hash/serialize
        return _jsonable(out)

    def config_hash(self) -> str:
        """Hash of the experiment's semantics (label and output path excluded,
        so a resumed run may write to a fresh directory)."""
        resolved = {k: v for k, v in self.resolved().items()
                    if k not in ("name", "output_dir")}
        blob = json.dumps(resolved, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    # -- builders --------------------------------------------------------------

    def build_env(self):
        kwargs = {k: v for k, v in self.env.items() if k != "name"}
        return make_env(self.env.get("name", ""), **kwargs)

    def run_config(self) -> RunConfig:
        known = {f.name for f in fields(RunConfig)}
        return RunConfig(**{k: v for k, v in self.run.items() if k in known})

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(**{k: v for k, v in self.learner.items()
                                if k in _LEARNER_KEYS})

    def agent_spec(self, env) -> AgentSpec:
        a = self.agent
        arch = a.get("architecture", "belief")
        target_kind = a.get("target_kind", "task-description")
        algorithm = self.learner.get("algorithm", LearnerConfig().algorithm)
        action_dim = (env.action_dim if env.action_kind == "continuous"
                      else env.n_actions)
        spec_kwargs: dict = {
            "architecture": arch,
            "obs_dim": env.obs_dim,
            "action_kind": env.action_kind,
            "action_dim": action_dim,
            "target_kind": target_kind,
            "critic_takes_action": algorithm != "ppo",
            "critic_uses_belief_features": a.get("critic_uses_belief_features", True),
            "aux_belief_weight": a.get("aux_belief_weight", 1.0),
        }
        for net in ("actor", "critic"):
            if net in a:
                spec_kwargs[net] = _net_config(a[net])
        if arch == "belief":
            spec_kwargs["belief"] = _net_config(a.get("belief", {}))
        if arch != "baseline":
            spec_kwargs["belief_head"] = a.get(
                "belief_head", derive_belief_head(env, target_kind, a))
        return AgentSpec(**spec_kwargs)

    def build_agent(self, env) -> Agent:
        return Agent(self.agent_spec(env), seed=self.seed)

    # -- validation -------------------------------------------------------------

    def validate(self) -> list[str]:
        """Every problem in the config, across all sections."""
        problems: list[str] = []
        env_name = self.env.get("name")
        if env_name not in ENV_KINDS:
            problems.append(f"unknown env name {env_name!r} "
                            f"(known: {sorted(ENV_KINDS)})")
            return problems + self.run_config().validate()
        sig = inspect.signature(ENV_KINDS[env_name].__init__)
        for key in self.env:
            if key != "name" and key not in sig.parameters:
                problems.append(f"env.{key} is not a {env_name} parameter")
        env = None
        if not problems:
            try:
                env = self.build_env()
            except Exception as exc:  # constructor-level invariants
                problems.append(f"env construction failed: {exc}")

        unknown_agent = set(self.agent) - {
            "architecture", "target_kind", "actor", "critic", "belief",
            "belief_head", "critic_uses_belief_features", "aux_belief_weight",
            "embed_dim"}
        for key in sorted(unknown_agent):
            problems.append(f"unknown agent key {key!r}")
        for net in ("actor", "critic", "belief"):
            section = self.agent.get(net)
            if isinstance(section, dict):
                for key in set(section) - _NETCONFIG_KEYS:
                    problems.append(f"agent.{net}.{key} is not a NetConfig field")

        for key in set(self.learner) - _LEARNER_KEYS:
            problems.append(f"unknown learner key {key!r}")
        known_run = {f.name for f in fields(RunConfig)}
        for key in set(self.run) - known_run:
            problems.append(f"unknown run key {key!r}")

        learner_cfg = self.learner_config()
        run_cfg = self.run_config()
        problems += run_cfg.validate()
        if learner_cfg.algorithm == "ppo" and run_cfg.workers > 1:
            problems.append("PPO runs are on-policy: run.workers must be 1")

        if env is not None:
            try:
                spec = self.agent_spec(env)
            except Exception as exc:
                problems.append(f"agent spec assembly failed: {exc}")
            else:
                problems += [f"agent: {p}" for p in spec.validate()]
                problems += [f"learner: {p}" for p in learner_cfg.validate(spec)]
                if (spec.architecture != "baseline"
                        and spec.target_kind == "task-description"
                        and spec.belief_head != env.belief_head_spec
                        and "belief_head" in self.agent):
                    problems.append(
                        "agent.belief_head does not match the env's task "
                        f"description head {env.belief_head_spec}")
        return problems


def derive_belief_head(env, target_kind: str, agent_section: dict) -> dict:
    """The belief head implied by the supervision target."""
    if target_kind == "task-description":
        return dict(env.belief_head_spec)
    if target_kind == "expert-action":
        if env.action_kind == "discrete":
            return {"kind": "categorical", "n": env.n_actions}
        return {"kind": "gaussian", "dim": env.action_dim}
    if target_kind == "task-id":
        return {"kind": "categorical", "n": len(env.split.train)}
    if target_kind == "task-embedding":
        return {"kind": "gaussian", "dim": agent_section.get("embed_dim", 16)}
    raise ValueError(f"unknown target kind {target_kind!r} "
                     f"(known: {TARGET_KINDS})")


def _net_config(section: dict) -> NetConfig:
    kwargs = {k: v for k, v in section.items() if k in _NETCONFIG_KEYS}
    for key in ("encoder", "head_hidden"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    return NetConfig(**kwargs)


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
