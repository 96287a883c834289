"""Discrete Numpad: visit a hidden tile sequence on a 3x3 grid.

Tiles are labeled 1..9 row-major:

    1 2 3
    4 5 6
    7 8 9

Tasks are simple paths (distinct tiles) of length 1..4 under 8-neighbor
adjacency, padded to 4 entries with -1; enumeration yields 704 tasks. The
agent moves with 9 discrete actions (8 directions + stay); moving off-grid
leaves it in place. Entering a cell triggers the light/reward logic:

- entering the next tile in sequence advances progress, lights the tile, and
  pays +1 the first time that prefix length is reached in the current cycle;
- completing the full sequence resets lights/progress and re-arms all prefix
  rewards (a new cycle);
- entering any other tile resets lights and progress (restarting immediately
  if the entered tile is the sequence's first).

During training the agent observes a masked task cue sampled per episode;
evaluation hides the cue entirely. The entry logic is a pure function shared
with the exact posterior, which eliminates sequences inconsistent with the
observed lights and rewards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import NumpadTask, TaskSplit

GRID = 3
N_TILES = GRID * GRID
# 8 directions (row, col) in reading order, then "stay".
MOVES = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1), (0, 0))
N_ACTIONS = len(MOVES)
MASK_REGIMES = ("fully-hidden", "partially-visible", "fully-visible")


def tile_coords(tile: int) -> tuple[int, int]:
    return divmod(tile - 1, GRID)


def neighbors(tile: int) -> list[int]:
    r, c = tile_coords(tile)
    out = []
    for dr, dc in MOVES[:8]:
        nr, nc = r + dr, c + dc
        if 0 <= nr < GRID and 0 <= nc < GRID:
            out.append(GRID * nr + nc + 1)
    return out


# The single-tile center task (5,) is excluded from the task set: it is
# degenerate in the original continuous arena, where the ball spawns at the
# platform center and would complete it without acting. 8-neighbor simple
# paths of length 1..4 number 705; excluding it leaves the canonical 704.
DEGENERATE_TASK = NumpadTask((5, -1, -1, -1))


def enumerate_tasks(max_len: int = 4) -> list[NumpadTask]:
    """All simple 8-neighbor paths of length 1..max_len, in DFS order."""
    tasks: list[NumpadTask] = []

    def extend(path: tuple[int, ...]) -> None:
        task = NumpadTask(tuple(path) + (-1,) * (4 - len(path)))
        if task != DEGENERATE_TASK:
            tasks.append(task)
        if len(path) == max_len:
            return
        for nxt in neighbors(path[-1]):
            if nxt not in path:
                extend(path + (nxt,))

    for start in range(1, N_TILES + 1):
        extend((start,))
    return tasks


def sample_mask(rng: np.random.Generator) -> tuple[int, int, int, int]:
    """Hidden count uniform on {0..4}, then a uniform mask with that many zeros."""
    n_hidden = int(rng.integers(0, 5))
    mask = [1, 1, 1, 1]
    for pos in rng.choice(4, size=n_hidden, replace=False):
        mask[pos] = 0
    return tuple(mask)


def numpad_entry(tiles: tuple[int, ...], progress: int, claimed: tuple[bool, ...],
                 cell: int) -> tuple[int, tuple[bool, ...], float, bool]:
    """Apply the entry logic for stepping onto `cell`.

    Returns (progress', claimed', reward, cycle_completed). Deterministic —
    also used by the exact posterior to test task consistency.
    """
    n = len(tiles)
    if cell != tiles[progress]:
        progress = 0  # out of sequence: lights reset
        if cell != tiles[0]:
            return 0, claimed, 0.0, False
    progress += 1
    reward = 0.0
    if not claimed[progress - 1]:
        reward = 1.0
        claimed = tuple(c or i == progress - 1 for i, c in enumerate(claimed))
    if progress == n:  # full cycle: lights reset, rewards re-armed
        return 0, (False,) * n, reward, True
    return progress, claimed, reward, False


def lights_vector(tiles: tuple[int, ...], progress: int) -> np.ndarray:
    vec = np.zeros(N_TILES)
    for tile in tiles[:progress]:
        vec[tile - 1] = 1.0
    return vec


def cue_vector(task: NumpadTask, mask: tuple[int, int, int, int]) -> np.ndarray:
    """4 blocks of 10 classes; hidden positions are the all-zero sentinel."""
    vec = np.zeros(4 * 10)
    for pos, (digit, visible) in enumerate(zip(task.description(), mask)):
        if visible:
            vec[10 * pos + int(digit)] = 1.0
    return vec


def numpad_split(max_len: int = 4, seed: int = 1234, train_frac: float = 0.9) -> TaskSplit:
    tasks = enumerate_tasks(max_len)
    order = np.random.default_rng(seed).permutation(len(tasks))
    n_train = int(train_frac * len(tasks))
    return TaskSplit([tasks[i] for i in order[:n_train]],
                     [tasks[i] for i in order[n_train:]])


@dataclass(frozen=True)
class NumpadState:
    cell: int
    progress: int
    claimed: tuple[bool, ...]
    cycles: int  # completed full-sequence cycles this episode
    mask: tuple[int, int, int, int]
    t: int


class NumpadEnv:
    kind = "numpad"
    action_kind = "discrete"
    n_actions = N_ACTIONS

    def __init__(self, horizon: int = 100, max_seq_len: int = 4,
                 cue_regime: str = "partially-visible", split_seed: int = 1234):
        if cue_regime not in MASK_REGIMES:
            raise ValueError(f"unknown cue regime: {cue_regime!r}")
        self.horizon = horizon
        self.max_seq_len = max_seq_len
        self.cue_regime = cue_regime
        self.split: TaskSplit = numpad_split(max_seq_len, split_seed)
        # cell one-hot + lights + cue + prev action one-hot + prev reward
        self.obs_dim = N_TILES + N_TILES + 40 + N_ACTIONS + 1
        self.belief_head_spec = {"kind": "factored", "k": 4, "c": 10}

    def sample_task(self, rng: np.random.Generator, split: str = "train") -> NumpadTask:
        return self.split.sample(rng, split)

    def task_description(self, task: NumpadTask) -> np.ndarray:
        return task.description()

    def _sample_mask(self, rng: np.random.Generator) -> tuple[int, int, int, int]:
        if self.cue_regime == "fully-hidden":
            return (0, 0, 0, 0)
        if self.cue_regime == "fully-visible":
            return (1, 1, 1, 1)
        return sample_mask(rng)

    def _obs(self, state: NumpadState, task: NumpadTask, prev_action: int | None,
             prev_reward: float) -> np.ndarray:
        cell_onehot = np.zeros(N_TILES)
        cell_onehot[state.cell - 1] = 1.0
        act_onehot = np.zeros(N_ACTIONS)
        if prev_action is not None:
            act_onehot[prev_action] = 1.0
        return np.concatenate([
            cell_onehot,
            lights_vector(task.tiles(), state.progress),
            cue_vector(task, state.mask),
            act_onehot,
            [prev_reward],
        ])

    def reset(self, task: NumpadTask, rng: np.random.Generator
              ) -> tuple[NumpadState, np.ndarray]:
        # Uniform random start cell; starting on a tile is not an entry event.
        state = NumpadState(cell=int(rng.integers(1, N_TILES + 1)), progress=0,
                            claimed=(False,) * len(task.tiles()), cycles=0,
                            mask=self._sample_mask(rng), t=0)
        return state, self._obs(state, task, None, 0.0)

    def step(self, state: NumpadState, action: int, task: NumpadTask,
             rng: np.random.Generator) -> tuple[NumpadState, np.ndarray, float, bool]:
        a = int(action)
        if not 0 <= a < N_ACTIONS:
            raise ValueError(f"action index {a} outside [0, {N_ACTIONS})")
        r, c = tile_coords(state.cell)
        dr, dc = MOVES[a]
        nr, nc = r + dr, c + dc
        if not (0 <= nr < GRID and 0 <= nc < GRID):
            nr, nc = r, c  # blocked moves leave the agent in place
        new_cell = GRID * nr + nc + 1
        progress, claimed, cycles = state.progress, state.claimed, state.cycles
        reward = 0.0
        if new_cell != state.cell:  # only entering a cell triggers tile logic
            progress, claimed, reward, completed = numpad_entry(
                task.tiles(), progress, claimed, new_cell)
            cycles += int(completed)
        new = NumpadState(new_cell, progress, claimed, cycles, state.mask, state.t + 1)
        done = new.t >= self.horizon
        return new, self._obs(new, task, a, reward), reward, done
