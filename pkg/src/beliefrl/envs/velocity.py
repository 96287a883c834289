"""1-D velocity tracking: run at an unknown target speed.

A point with velocity state v, acceleration action a in [-1, 1], Euler step
v' = v + dt * (a - drag * v), and per-step reward r(v') =
max(1 - |v'/v_target - 1|, 0). Preserves the inference structure of the
run-at-speed task (Gaussian belief over a hidden scalar) without a physics
engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import TaskSplit, VelocityTask, velocity_split


@dataclass(frozen=True)
class VelocityState:
    v: float
    t: int


def velocity_reward(v: float, v_target: float) -> float:
    """r(v) = max(1 - |v / v_target - 1|, 0)."""
    assert v_target > 0
    return max(1.0 - abs(v / v_target - 1.0), 0.0)


class VelocityEnv:
    kind = "velocity"
    action_kind = "continuous"
    action_dim = 1

    def __init__(self, horizon: int = 200, dt: float = 0.05, drag: float = 0.1,
                 n_train: int = 1000, n_val: int = 1000, split_seed: int = 1234):
        self.horizon = horizon
        self.dt = dt
        self.drag = drag
        self.split: TaskSplit = velocity_split(n_train, n_val, split_seed)
        self.obs_dim = 1 + self.action_dim + 1  # v + prev action + prev reward
        self.belief_head_spec = {"kind": "gaussian", "dim": 1}

    def sample_task(self, rng: np.random.Generator, split: str = "train") -> VelocityTask:
        return self.split.sample(rng, split)

    def task_description(self, task: VelocityTask) -> np.ndarray:
        return task.description()

    def _obs(self, state: VelocityState, prev_action: float, prev_reward: float) -> np.ndarray:
        return np.asarray([state.v, prev_action, prev_reward])

    def reset(self, task: VelocityTask, rng: np.random.Generator
              ) -> tuple[VelocityState, np.ndarray]:
        state = VelocityState(0.0, 0)
        return state, self._obs(state, 0.0, 0.0)

    def step(self, state: VelocityState, action: np.ndarray, task: VelocityTask,
             rng: np.random.Generator) -> tuple[VelocityState, np.ndarray, float, bool]:
        a = float(np.clip(np.asarray(action).reshape(-1)[0], -1.0, 1.0))
        v = state.v + self.dt * (a - self.drag * state.v)
        new = VelocityState(float(v), state.t + 1)
        reward = velocity_reward(new.v, task.v_target)
        done = new.t >= self.horizon
        return new, self._obs(new, a, reward), reward, done
