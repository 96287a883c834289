"""K-armed Bernoulli bandit with task = arm-probability vector.

There are no environment observations: the agent's input is the previous
action (one-hot) and previous reward, per the standard meta-RL bandit setup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import BanditTask, TaskSplit, bandit_split


@dataclass(frozen=True)
class BanditState:
    t: int  # pulls so far


class BanditEnv:
    kind = "bandit"
    action_kind = "discrete"

    def __init__(self, n_arms: int = 10, horizon: int = 100,
                 n_train: int = 1000, n_val: int = 1000, split_seed: int = 1234):
        self.n_arms = n_arms
        self.n_actions = n_arms
        self.horizon = horizon
        self.split: TaskSplit = bandit_split(n_arms, n_train, n_val, split_seed)
        self.obs_dim = n_arms + 1  # prev action one-hot + prev reward
        self.belief_head_spec = {"kind": "beta", "dim": n_arms}

    def sample_task(self, rng: np.random.Generator, split: str = "train") -> BanditTask:
        return self.split.sample(rng, split)

    def task_description(self, task: BanditTask) -> np.ndarray:
        return task.description()

    def _obs(self, prev_action: int | None, prev_reward: float) -> np.ndarray:
        vec = np.zeros(self.obs_dim)
        if prev_action is not None:
            vec[prev_action] = 1.0
        vec[-1] = prev_reward
        return vec

    def reset(self, task: BanditTask, rng: np.random.Generator
              ) -> tuple[BanditState, np.ndarray]:
        return BanditState(0), self._obs(None, 0.0)

    def step(self, state: BanditState, action: int, task: BanditTask,
             rng: np.random.Generator) -> tuple[BanditState, np.ndarray, float, bool]:
        arm = int(action)
        if not 0 <= arm < self.n_arms:
            raise ValueError(f"arm index {arm} outside [0, {self.n_arms})")
        reward = float(rng.random() < task.probs[arm])
        new = BanditState(state.t + 1)
        return new, self._obs(arm, reward), reward, new.t >= self.horizon
