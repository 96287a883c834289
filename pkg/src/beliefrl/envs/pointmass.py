"""Point-mass navigation: Semicircle (sparse capture) and NoisyTarget (noisy
Bernoulli rewards), sharing one Euler substep integrator.

Dynamics per control step: 10 Euler substeps of dt = 0.01 with forward speed
a1 * 1.0 and angular velocity a2 * 2pi (actions clamped to [-1, 1]^2). Each
substep rotates first, then translates along the new heading. The integrator
is a pure function of (pose, action) so the exact posterior can re-simulate
candidate-target capture sets from observed transitions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import (
    NoisyTargetTask,
    SemicircleTask,
    TaskSplit,
    noisy_target_split,
    semicircle_split,
)


@dataclass(frozen=True)
class PointMassState:
    x: float
    y: float
    phi: float
    t: int  # control steps taken so far


def substep_path(x: float, y: float, phi: float, action: np.ndarray,
                 n_substeps: int = 10, dt: float = 0.01,
                 max_speed: float = 1.0, max_turn: float = 2.0 * np.pi
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Positions/orientations after each substep; arrays of length n_substeps."""
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    speed = a[0] * max_speed
    omega = a[1] * max_turn
    phis = phi + dt * omega * np.arange(1, n_substeps + 1)
    xs = x + np.cumsum(dt * speed * np.cos(phis))
    ys = y + np.cumsum(dt * speed * np.sin(phis))
    return xs, ys, phis


def capture_substep(xs: np.ndarray, ys: np.ndarray, target: tuple[float, float],
                    radius: float) -> int:
    """Index of the first substep within `radius` of `target`, or -1."""
    d2 = (xs - target[0]) ** 2 + (ys - target[1]) ** 2
    hits = np.flatnonzero(d2 <= radius * radius)
    return int(hits[0]) if hits.size else -1


def _pose_features(x: float, y: float, phi: float) -> np.ndarray:
    return np.asarray([x, y, np.cos(phi), np.sin(phi)])


class SemicircleEnv:
    """Find the hidden target on a semicircle of radius 0.2; +1 and teleport
    to the origin (fresh random orientation) on capture. Capture consumes the
    rest of the control step."""

    kind = "semicircle"
    action_kind = "continuous"
    action_dim = 2

    def __init__(self, horizon: int = 100, capture_radius: float = 0.05,
                 target_radius: float = 0.2, n_substeps: int = 10, dt: float = 0.01,
                 n_train: int = 1000, n_val: int = 1000, split_seed: int = 1234):
        self.horizon = horizon
        self.capture_radius = capture_radius
        self.target_radius = target_radius
        self.n_substeps = n_substeps
        self.dt = dt
        self.split: TaskSplit = semicircle_split(n_train, n_val, split_seed)
        self.obs_dim = 4 + self.action_dim + 1  # pose + prev action + prev reward
        self.belief_head_spec = {"kind": "binned", "n_bins": 10, "lo": 0.0, "hi": float(np.pi)}

    def sample_task(self, rng: np.random.Generator, split: str = "train") -> SemicircleTask:
        return self.split.sample(rng, split)

    def task_description(self, task: SemicircleTask) -> np.ndarray:
        return task.description()

    def _obs(self, state: PointMassState, prev_action: np.ndarray,
             prev_reward: float) -> np.ndarray:
        return np.concatenate([
            _pose_features(state.x, state.y, state.phi),
            np.clip(np.asarray(prev_action, dtype=np.float64), -1.0, 1.0),
            [prev_reward],
        ])

    def reset(self, task: SemicircleTask, rng: np.random.Generator
              ) -> tuple[PointMassState, np.ndarray]:
        state = PointMassState(0.0, 0.0, float(rng.uniform(0.0, 2.0 * np.pi)), 0)
        return state, self._obs(state, np.zeros(self.action_dim), 0.0)

    def step(self, state: PointMassState, action: np.ndarray, task: SemicircleTask,
             rng: np.random.Generator
             ) -> tuple[PointMassState, np.ndarray, float, bool]:
        xs, ys, phis = substep_path(state.x, state.y, state.phi, action,
                                    self.n_substeps, self.dt)
        hit = capture_substep(xs, ys, task.target(self.target_radius), self.capture_radius)
        if hit >= 0:
            reward = 1.0
            new = PointMassState(0.0, 0.0, float(rng.uniform(0.0, 2.0 * np.pi)),
                                 state.t + 1)
        else:
            reward = 0.0
            new = PointMassState(float(xs[-1]), float(ys[-1]), float(phis[-1]),
                                 state.t + 1)
        done = new.t >= self.horizon
        return new, self._obs(new, action, reward), reward, done


def noisy_reward_prob(d: float) -> float:
    """p = min(0.5, (1 + d^2)^-1) for distance d >= 0."""
    return min(0.5, 1.0 / (1.0 + d * d))


class NoisyTargetEnv:
    """Integrate noisy rewards to localize a hidden target in [-1,1]^2.

    A Bernoulli(p) reward with p = min(0.5, (1+d^2)^-1) is emitted on control
    steps t = 1, 3, 5, ... (0-based count after reset), where d is the
    distance from the post-step position to the target. No capture, no
    teleport; position is clamped to the arena square.
    """

    kind = "noisy_target"
    action_kind = "continuous"
    action_dim = 2

    def __init__(self, horizon: int = 200, half_width: float = 1.0,
                 n_substeps: int = 10, dt: float = 0.01,
                 n_train: int = 1000, n_val: int = 1000, split_seed: int = 1234):
        self.horizon = horizon
        self.half_width = half_width
        self.n_substeps = n_substeps
        self.dt = dt
        self.split: TaskSplit = noisy_target_split(half_width, n_train, n_val, split_seed)
        self.obs_dim = 4 + self.action_dim + 1
        self.belief_head_spec = {"kind": "gaussian", "dim": 2}

    def sample_task(self, rng: np.random.Generator, split: str = "train") -> NoisyTargetTask:
        return self.split.sample(rng, split)

    def task_description(self, task: NoisyTargetTask) -> np.ndarray:
        return task.description()

    def _obs(self, state: PointMassState, prev_action: np.ndarray,
             prev_reward: float) -> np.ndarray:
        return np.concatenate([
            _pose_features(state.x, state.y, state.phi),
            np.clip(np.asarray(prev_action, dtype=np.float64), -1.0, 1.0),
            [prev_reward],
        ])

    def reset(self, task: NoisyTargetTask, rng: np.random.Generator
              ) -> tuple[PointMassState, np.ndarray]:
        x, y = rng.uniform(-self.half_width, self.half_width, 2)
        state = PointMassState(float(x), float(y),
                               float(rng.uniform(0.0, 2.0 * np.pi)), 0)
        return state, self._obs(state, np.zeros(self.action_dim), 0.0)

    def step(self, state: PointMassState, action: np.ndarray, task: NoisyTargetTask,
             rng: np.random.Generator
             ) -> tuple[PointMassState, np.ndarray, float, bool]:
        xs, ys, phis = substep_path(state.x, state.y, state.phi, action,
                                    self.n_substeps, self.dt)
        hw = self.half_width
        new = PointMassState(float(np.clip(xs[-1], -hw, hw)),
                             float(np.clip(ys[-1], -hw, hw)),
                             float(phis[-1]), state.t + 1)
        reward = 0.0
        if state.t % 2 == 1:  # reward steps are t = 1, 3, 5, ... (0-based)
            d = float(np.hypot(new.x - task.target[0], new.y - task.target[1]))
            reward = float(rng.random() < noisy_reward_prob(d))
        done = new.t >= self.horizon
        return new, self._obs(new, action, reward), reward, done
