"""Single-task experts and expert-action labeling (the h_t = a_t^{w;e} path).

An expert is an agent for one fixed, fully specified task: its observation is
the environment observation with the task description appended. Training is
behavioral cloning against the task's closed-form controller (the optimum is
known once the task is visible), which is fast and deterministic; the
achieved return is measured and returned so callers can see whether the
budget sufficed.

Labels from `label_expert_actions` depend only on (trajectory, task): the
expert's policy mode/argmax is evaluated on each step's inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..agents import Agent, AgentSpec, NetConfig
from ..nn import Tensor, adam_update
from ..nn import autodiff as ad
from ..oracle import steer_action
from ..envs.numpad import MOVES, tile_coords


@dataclass
class ExpertResult:
    policy: "ExpertPolicy"
    mean_return: float  # achieved over the post-training measurement episodes
    n_train_steps: int


class ExpertPolicy:
    """A trained single-task policy exposing per-observation greedy actions."""

    def __init__(self, agent: Agent, env, task):
        self.agent = agent
        self.env = env
        self.task = task
        self.description = np.asarray(env.task_description(task), dtype=np.float64)

    def expert_obs(self, obs: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(obs, dtype=np.float64), self.description])

    def act(self, obs: np.ndarray, carry: dict, rng: np.random.Generator,
            mode: str = "mean"):
        return self.agent.act(self.expert_obs(obs), carry, rng, mode=mode)

    def greedy_action(self, obs: np.ndarray, rng: np.random.Generator):
        """Policy mean (continuous) or argmax (discrete) for one observation."""
        action, _, _, _ = self.act(obs, self.agent.initial_carry(), rng, mode="mean")
        return action


def oracle_controller(env, task):
    """The known-task closed-form controller used as the cloning target.

    Returns fn(state, env_obs) -> action for the given env kind.
    """
    kind = env.kind
    if kind == "bandit":
        best = int(np.argmax(task.probs))
        return lambda state, obs: best
    if kind == "semicircle":
        target = task.target(env.target_radius)
        return lambda state, obs: steer_action(state.x, state.y, state.phi, target)
    if kind == "noisy_target":
        return lambda state, obs: steer_action(state.x, state.y, state.phi,
                                               task.target)
    if kind == "velocity":
        def velocity_control(state, obs):
            a = env.drag * task.v_target + 2.0 * (task.v_target - state.v)
            return np.asarray([np.clip(a, -1.0, 1.0)])
        return velocity_control
    if kind == "numpad":
        tiles = task.tiles()

        def numpad_control(state, obs):
            nxt = tiles[state.progress % len(tiles)] if state.progress < len(tiles) \
                else tiles[0]
            r, c = tile_coords(state.cell)
            tr, tc = tile_coords(nxt)
            delta = (int(np.sign(tr - r)), int(np.sign(tc - c)))
            return MOVES.index(delta)
        return numpad_control
    raise ValueError(f"no oracle controller for env kind {kind!r}")


def _expert_spec(env) -> AgentSpec:
    desc_len = len(np.asarray(env.task_description(env.split.train[0])))
    action_dim = (env.action_dim if env.action_kind == "continuous"
                  else env.n_actions)
    return AgentSpec(
        architecture="baseline",
        obs_dim=env.obs_dim + desc_len,
        action_kind=env.action_kind,
        action_dim=action_dim,
        actor=NetConfig(encoder=(64,), lstm=None, layer_norm=False),
        critic=NetConfig(encoder=(32,), lstm=None, layer_norm=False),
        critic_takes_action=env.action_kind == "continuous")


def train_expert(env, task, seed: int = 0, budget: int = 400,
                 n_episodes: int = 20, learning_rate: float = 3e-3,
                 exploration: float = 0.2, measure_episodes: int = 10
                 ) -> ExpertResult:
    """Clone the known-task controller into a single-task policy network.

    `budget` is the number of full-batch gradient steps; the dataset is
    `n_episodes` episodes driven by the controller with epsilon-greedy
    exploration (labels always come from the controller, DAgger-style).
    """
    rng = np.random.default_rng(seed)
    agent = Agent(_expert_spec(env), seed=seed)
    policy = ExpertPolicy(agent, env, task)
    control = oracle_controller(env, task)

    inputs, labels = [], []
    for _ in range(n_episodes):
        state, obs = env.reset(task, rng)
        done = False
        while not done:
            label = control(state, obs)
            inputs.append(policy.expert_obs(obs))
            labels.append(label)
            if rng.random() < exploration:
                if env.action_kind == "discrete":
                    action = int(rng.integers(agent.spec.action_dim))
                else:
                    action = rng.uniform(-1.0, 1.0, agent.spec.action_dim)
            else:
                action = label
            state, obs, _, done = env.step(state, action, task, rng)

    x = Tensor(np.stack(inputs))
    steps = 0
    if env.action_kind == "discrete":
        idx = np.asarray(labels, dtype=np.int64)
    else:
        y = np.stack([np.asarray(a, dtype=np.float64) for a in labels])
    for _ in range(budget):
        dist, _, _, _ = agent.actor_net.step(x, None, rng, sample_ib=False)
        if env.action_kind == "discrete":
            loss = ad.mean(0.0 - dist.log_prob(idx))
        else:
            # MSE on the mean plus a small variance penalty: the expert should
            # be near-deterministic, and the penalty keeps every actor
            # parameter (including the std projection) inside the loss.
            loss = (ad.mean(ad.sum(ad.square(dist.mean - Tensor(y)), axis=-1))
                    + 0.01 * ad.mean(ad.square(dist.std)))
        agent.params.actor.zero_grad()
        ad.backward(loss)
        adam_update(agent.params.actor, learning_rate)
        steps += 1

    returns = []
    for _ in range(measure_episodes):
        state, obs = env.reset(task, rng)
        carry = agent.initial_carry()
        total, done = 0.0, False
        while not done:
            action, _, carry, _ = policy.act(obs, carry, rng, mode="mean")
            state, obs, reward, done = env.step(state, action, task, rng)
            total += reward
        returns.append(total)
    return ExpertResult(policy, float(np.mean(returns)), steps)


def label_expert_actions(expert: ExpertPolicy, observations: np.ndarray,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-step expert labels h_t for a trajectory's observation rows.

    The expert's policy mean (continuous) or argmax (discrete) is evaluated
    on each step's inputs; the result depends only on the trajectory and the
    expert's task.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    observations = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    labels = [expert.greedy_action(obs, rng) for obs in observations]
    if expert.agent.spec.action_kind == "discrete":
        return np.asarray(labels, dtype=np.int64)
    return np.stack(labels)


def expert_task_info_fn(experts: dict):
    """A Collector task_info_fn for expert-action supervision.

    `experts` maps repr(task) -> ExpertPolicy; labels are the expert's greedy
    action on the learner's current observation.
    """
    label_rng = np.random.default_rng(0)

    def fn(env, task, t, obs):
        expert = experts[repr(task)]
        action = expert.greedy_action(obs, label_rng)
        if env.action_kind == "discrete":
            return np.asarray([action], dtype=np.float64)
        return np.asarray(action, dtype=np.float64)

    return fn
