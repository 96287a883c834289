"""Trajectory replay: unrolls with RNN initial states and behavior log-probs.

Entries are immutable once pushed (arrays are copied and frozen), sampling is
uniform with replacement, eviction is strictly FIFO, and push/sample are
linearizable under a single lock so multiple collection workers can feed one
learner without torn reads.
"""

from __future__ import annotations

import pickle
import threading
from collections import deque
from dataclasses import dataclass, fields

import numpy as np

RnnState = tuple[np.ndarray, np.ndarray] | None


def _frozen_copy(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


def _frozen_state(state: RnnState) -> RnnState:
    if state is None:
        return None
    h, c = state
    return (_frozen_copy(h), _frozen_copy(c))


@dataclass(frozen=True)
class ReplayEntry:
    """One length-U unroll.

    observations holds x_0..x_U (U+1 rows — the trailing row bootstraps
    values); actions/rewards/valid/behavior_log_probs/task_info hold U rows.
    `valid` masks padding in a final partial unroll; `dones` marks true
    episode termination (no bootstrapping past it). The stored RNN states are
    the nets' states at the unroll's first step, exactly as used when acting.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    valid: np.ndarray
    behavior_log_probs: np.ndarray
    task_info: np.ndarray
    actor_state: RnnState
    critic_state: RnnState
    belief_state: RnnState
    episode_id: int
    step_offset: int

    def __post_init__(self):
        u = len(self.rewards)
        if u == 0:
            raise ValueError("empty unroll")
        for name in ("actions", "dones", "valid", "behavior_log_probs", "task_info"):
            arr = getattr(self, name)
            if len(arr) != u:
                raise ValueError(f"{name} has length {len(arr)}, expected {u}")
        if len(self.observations) != u + 1:
            raise ValueError(f"observations has length {len(self.observations)}, "
                             f"expected {u + 1}")
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, np.ndarray):
                object.__setattr__(self, f.name, _frozen_copy(val))
            elif f.name.endswith("_state"):
                object.__setattr__(self, f.name, _frozen_state(val))
        if not np.isfinite(self.rewards).all():
            raise ValueError("non-finite rewards")

    @property
    def unroll_length(self) -> int:
        return len(self.rewards)


def segment_episode(observations: np.ndarray, actions: np.ndarray,
                    rewards: np.ndarray, behavior_log_probs: np.ndarray,
                    task_info: np.ndarray, states: dict[str, list[RnnState]],
                    unroll_length: int, episode_id: int) -> list[ReplayEntry]:
    """Split one full episode into non-overlapping length-U unrolls.

    `states` maps net name (actor/critic/belief) to the per-step RNN states
    *before* each of the T steps (length T, entries None for feedforward
    nets). The final partial unroll is padded (repeated last observation,
    zero action/reward) with a validity mask; `done` is set on the episode's
    true last step.
    """
    T = len(rewards)
    if len(observations) != T + 1:
        raise ValueError("observations must have one more row than rewards")
    entries = []
    for start in range(0, T, unroll_length):
        stop = min(start + unroll_length, T)
        n = stop - start
        pad = unroll_length - n

        def padded(arr, pad_value=0.0):
            chunk = np.asarray(arr[start:stop])
            if pad == 0:
                return chunk
            fill = np.full((pad,) + chunk.shape[1:], pad_value, dtype=chunk.dtype)
            return np.concatenate([chunk, fill], axis=0)

        obs = np.asarray(observations[start:stop + 1])
        if pad:
            obs = np.concatenate([obs, np.repeat(obs[-1:], pad, axis=0)], axis=0)
        dones = np.zeros(unroll_length, dtype=bool)
        if stop == T:
            dones[n - 1] = True
        valid = np.zeros(unroll_length)
        valid[:n] = 1.0
        entries.append(ReplayEntry(
            observations=obs,
            actions=padded(actions),
            rewards=padded(rewards),
            dones=dones,
            valid=valid,
            behavior_log_probs=padded(behavior_log_probs),
            task_info=padded(task_info),
            actor_state=states.get("actor", [None] * T)[start],
            critic_state=states.get("critic", [None] * T)[start],
            belief_state=states.get("belief", [None] * T)[start],
            episode_id=episode_id,
            step_offset=start,
        ))
    return entries


class ReplayBuffer:
    """FIFO ring of ReplayEntry with uniform with-replacement sampling."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._entries: deque[ReplayEntry] = deque(maxlen=capacity)
        self._lock = threading.Lock()
        self.total_pushed = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def push(self, entry: ReplayEntry) -> None:
        if not isinstance(entry, ReplayEntry):
            raise ValueError("only ReplayEntry instances can be pushed")
        with self._lock:
            self._entries.append(entry)
            self.total_pushed += 1

    def sample_uniform(self, batch_size: int, rng: np.random.Generator
                       ) -> list[ReplayEntry]:
        with self._lock:
            if not self._entries:
                raise ValueError("cannot sample from an empty replay buffer")
            idx = rng.integers(0, len(self._entries), size=batch_size)
            return [self._entries[i] for i in idx]

    def snapshot(self) -> list[ReplayEntry]:
        with self._lock:
            return list(self._entries)

    def save(self, path) -> None:
        with self._lock:
            payload = {"capacity": self.capacity, "total_pushed": self.total_pushed,
                       "entries": list(self._entries)}
        with open(path, "wb") as f:
            pickle.dump(payload, f)

    @classmethod
    def load(cls, path) -> "ReplayBuffer":
        with open(path, "rb") as f:
            payload = pickle.load(f)
        buf = cls(payload["capacity"])
        buf._entries.extend(payload["entries"])
        buf.total_pushed = payload["total_pushed"]
        return buf
