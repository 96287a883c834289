"""Environment registry."""

from __future__ import annotations

from .bandit import BanditEnv, BanditState
from .numpad import NumpadEnv, NumpadState, enumerate_tasks, numpad_entry, sample_mask
from .pointmass import (
    NoisyTargetEnv,
    PointMassState,
    SemicircleEnv,
    capture_substep,
    noisy_reward_prob,
    substep_path,
)
from .tasks import (
    BanditTask,
    NoisyTargetTask,
    NumpadTask,
    SemicircleTask,
    TaskSplit,
    VelocityTask,
)
from .velocity import VelocityEnv, VelocityState, velocity_reward

ENV_KINDS = {
    "bandit": BanditEnv,
    "semicircle": SemicircleEnv,
    "noisy_target": NoisyTargetEnv,
    "velocity": VelocityEnv,
    "numpad": NumpadEnv,
}


def make_env(kind: str, **kwargs):
    try:
        cls = ENV_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown env kind: {kind!r}") from None
    return cls(**kwargs)


__all__ = [
    "BanditEnv", "BanditState", "BanditTask",
    "NoisyTargetEnv", "NoisyTargetTask",
    "NumpadEnv", "NumpadState", "NumpadTask",
    "PointMassState", "SemicircleEnv", "SemicircleTask",
    "VelocityEnv", "VelocityState", "VelocityTask",
    "TaskSplit", "ENV_KINDS", "make_env",
    "enumerate_tasks", "numpad_entry", "sample_mask",
    "capture_substep", "noisy_reward_prob", "substep_path", "velocity_reward",
]
