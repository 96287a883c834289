"""Task specifications and train/validation splits.

A task is the hidden variable w sampled once per episode. Splits are
pre-generated from a fixed seed so train and validation sets are disjoint
and reproducible across runs; continuous families draw finite task lists
for a held-out evaluation set, Numpad partitions its enumerated 704-task
list 90/10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BanditTask:
    probs: tuple[float, ...]

    def __post_init__(self):
        assert all(0.0 <= p <= 1.0 for p in self.probs)

    def description(self) -> np.ndarray:
        return np.asarray(self.probs)


@dataclass(frozen=True)
class SemicircleTask:
    angle: float  # radians in [0, pi]

    def __post_init__(self):
        assert 0.0 <= self.angle <= np.pi

    def target(self, radius: float = 0.2) -> tuple[float, float]:
        return (radius * np.cos(self.angle), radius * np.sin(self.angle))

    def description(self) -> np.ndarray:
        return np.asarray([self.angle])


@dataclass(frozen=True)
class NoisyTargetTask:
    target: tuple[float, float]  # point in the arena square

    def description(self) -> np.ndarray:
        return np.asarray(self.target)


@dataclass(frozen=True)
class VelocityTask:
    v_target: float  # in [3, 10]

    def description(self) -> np.ndarray:
        return np.asarray([self.v_target])


@dataclass(frozen=True)
class NumpadTask:
    sequence: tuple[int, int, int, int]  # tiles 1..9, padded with -1

    def __post_init__(self):
        tiles = self.tiles()
        assert 1 <= len(tiles) <= 4
        assert len(set(tiles)) == len(tiles)

    def tiles(self) -> tuple[int, ...]:
        return tuple(d for d in self.sequence if d != -1)

    def description(self) -> np.ndarray:
        """Class indices over {-1, 1..9} -> {0, 1..9} for the factored head."""
        return np.asarray([0 if d == -1 else d for d in self.sequence])


class TaskSplit:
    """Finite train/validation task lists with uniform sampling."""

    def __init__(self, train: list, validation: list):
        if set(map(repr, train)) & set(map(repr, validation)):
            raise ValueError("train and validation task sets overlap")
        self.train = train
        self.validation = validation

    def tasks(self, split: str) -> list:
        if split == "train":
            return self.train
        if split == "validation":
            return self.validation
        raise ValueError(f"unknown split: {split!r}")

    def sample(self, rng: np.random.Generator, split: str = "train"):
        tasks = self.tasks(split)
        return tasks[rng.integers(len(tasks))]


def bandit_split(n_arms: int, n_train: int = 1000, n_val: int = 1000,
                 seed: int = 1234) -> TaskSplit:
    rng = np.random.default_rng(seed)
    draw = lambda: BanditTask(tuple(rng.uniform(0.0, 1.0, n_arms)))
    return TaskSplit([draw() for _ in range(n_train)], [draw() for _ in range(n_val)])


def semicircle_split(n_train: int = 1000, n_val: int = 1000, seed: int = 1234) -> TaskSplit:
    rng = np.random.default_rng(seed)
    draw = lambda: SemicircleTask(float(rng.uniform(0.0, np.pi)))
    return TaskSplit([draw() for _ in range(n_train)], [draw() for _ in range(n_val)])


def noisy_target_split(half_width: float = 1.0, n_train: int = 1000, n_val: int = 1000,
                       seed: int = 1234) -> TaskSplit:
    rng = np.random.default_rng(seed)
    draw = lambda: NoisyTargetTask(tuple(rng.uniform(-half_width, half_width, 2)))
    return TaskSplit([draw() for _ in range(n_train)], [draw() for _ in range(n_val)])


def velocity_split(n_train: int = 1000, n_val: int = 1000, seed: int = 1234) -> TaskSplit:
    rng = np.random.default_rng(seed)
    draw = lambda: VelocityTask(float(rng.uniform(3.0, 10.0)))
    return TaskSplit([draw() for _ in range(n_train)], [draw() for _ in range(n_val)])
