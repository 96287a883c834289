"""Exact Bayesian posteriors over the hidden task, and Thompson baselines.

The posterior over tasks depends only on the realized trajectory, not on the
policy that produced it:

    b_{t+1}(w)  proportional to  R^w(r_t | x_t, a_t, x_{t+1})
                                 * P^w(x_{t+1} | x_t, a_t) * b_t(w)

All updates run in log space (horizon-100+ likelihood products underflow) and
every update returns a NEW posterior object; posteriors are immutable values
safe to share across workers. A zero-mass posterior (trajectory impossible
under the model) raises instead of silently renormalizing.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .envs.numpad import lights_vector, numpad_entry
from .envs.pointmass import noisy_reward_prob, substep_path
from .envs.tasks import NumpadTask


class ZeroMassPosterior(ValueError):
    """The observed trajectory has zero likelihood under every task."""


def _normalize_log(log_w: np.ndarray) -> np.ndarray:
    total = logsumexp(log_w)
    if not np.isfinite(total):
        raise ZeroMassPosterior("all tasks eliminated: trajectory impossible under the model")
    return log_w - total


# ---------------------------------------------------------------------------
# finite tabular meta-MDPs (test oracle for the general recursion)


class TabularMetaMDP:
    """Finite task set over a finite MDP with a finite reward alphabet.

    P: (W, S, A, S) transition probabilities per task.
    R: (W, S, A, S, K) reward probabilities over `reward_values` (length K).
    prior: (W,) task prior.  p0: (W, S) initial-state distribution per task.
    """

    def __init__(self, P: np.ndarray, R: np.ndarray, reward_values: np.ndarray,
                 prior: np.ndarray, p0: np.ndarray):
        self.P = np.asarray(P, dtype=np.float64)
        self.R = np.asarray(R, dtype=np.float64)
        self.reward_values = np.asarray(reward_values, dtype=np.float64)
        self.prior = np.asarray(prior, dtype=np.float64)
        self.p0 = np.asarray(p0, dtype=np.float64)
        self.n_tasks, self.n_states, self.n_actions = self.P.shape[:3]
        for name, table, axis in (("P", self.P, -1), ("R", self.R, -1),
                                  ("prior", self.prior, -1), ("p0", self.p0, -1)):
            sums = table.sum(axis=axis)
            if not np.allclose(sums, 1.0, atol=1e-12):
                raise ValueError(f"{name} rows not normalized")

    @staticmethod
    def random(rng: np.random.Generator, max_states: int = 5, max_actions: int = 3,
               max_tasks: int = 4, n_rewards: int = 3) -> "TabularMetaMDP":
        S = int(rng.integers(2, max_states + 1))
        A = int(rng.integers(1, max_actions + 1))
        W = int(rng.integers(2, max_tasks + 1))
        dirichlet = lambda shape, k: rng.dirichlet(np.ones(k), size=shape)
        return TabularMetaMDP(
            P=dirichlet((W, S, A), S),
            R=dirichlet((W, S, A, S), n_rewards),
            reward_values=np.sort(rng.uniform(0.0, 1.0, n_rewards)),
            prior=rng.dirichlet(np.ones(W)),
            p0=dirichlet((W,), S),
        )

    def simulate(self, task: int, policy, horizon: int, rng: np.random.Generator,
                 policy_rng: np.random.Generator | None = None
                 ) -> tuple[int, list[tuple[int, int, int]]]:
        """Roll a trajectory under `policy(x, t, rng) -> a`.

        Environment draws come from `rng`; the policy draws from `policy_rng`
        (defaults to `rng`), so two rules that emit the same actions produce
        bit-identical realized trajectories. Returns (x0, [(a, r_idx, x') ...]).
        """
        if policy_rng is None:
            policy_rng = rng
        x = int(rng.choice(self.n_states, p=self.p0[task]))
        x0 = x
        steps = []
        for t in range(horizon):
            a = int(policy(x, t, policy_rng))
            x2 = int(rng.choice(self.n_states, p=self.P[task, x, a]))
            r_idx = int(rng.choice(len(self.reward_values), p=self.R[task, x, a, x2]))
            steps.append((a, r_idx, x2))
            x = x2
        return x0, steps


class CategoricalPosterior:
    """Posterior over the task index of a TabularMetaMDP."""

    __slots__ = ("log_w",)

    def __init__(self, log_w: np.ndarray):
        self.log_w = _normalize_log(np.asarray(log_w, dtype=np.float64))

    @classmethod
    def from_initial_state(cls, model: TabularMetaMDP, x0: int) -> "CategoricalPosterior":
        with np.errstate(divide="ignore"):
            return cls(np.log(model.prior) + np.log(model.p0[:, x0]))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_w)

    def update(self, model: TabularMetaMDP, x: int, a: int, r_idx: int, x2: int
               ) -> "CategoricalPosterior":
        with np.errstate(divide="ignore"):
            step = np.log(model.P[:, x, a, x2]) + np.log(model.R[:, x, a, x2, r_idx])
        return CategoricalPosterior(self.log_w + step)


def posterior_direct(model: TabularMetaMDP, x0: int,
                     transitions: list[tuple[int, int, int]]) -> CategoricalPosterior:
    """One-pass posterior: prior * p0 * prod P^w * prod R^w, in log space."""
    with np.errstate(divide="ignore"):
        log_w = np.log(model.prior) + np.log(model.p0[:, x0])
        x = x0
        for a, r_idx, x2 in transitions:
            log_w = log_w + np.log(model.P[:, x, a, x2]) + np.log(model.R[:, x, a, x2, r_idx])
            x = x2
    return CategoricalPosterior(log_w)


def posterior_expected_reward(model: TabularMetaMDP, posterior: CategoricalPosterior,
                              x: int, a: int, x2: int) -> float:
    """r_bar(x, a, x', b) = sum_w b(w) sum_r R^w(r|x,a,x') r."""
    per_task = model.R[:, x, a, x2, :] @ model.reward_values
    return float(posterior.weights @ per_task)


# ---------------------------------------------------------------------------
# bandit: conjugate Beta posterior per arm


class BetaPerArm:
    """Independent Beta(alpha_k, beta_k) over each arm's success probability."""

    __slots__ = ("alpha", "beta")

    def __init__(self, alpha: np.ndarray, beta: np.ndarray):
        self.alpha = np.asarray(alpha, dtype=np.float64)
        self.beta = np.asarray(beta, dtype=np.float64)
        if np.any(self.alpha <= 0) or np.any(self.beta <= 0):
            raise ValueError("Beta parameters must be positive")

    @classmethod
    def uniform_prior(cls, n_arms: int) -> "BetaPerArm":
        return cls(np.ones(n_arms), np.ones(n_arms))

    def update(self, arm: int, reward: float) -> "BetaPerArm":
        alpha = self.alpha.copy()
        beta = self.beta.copy()
        alpha[arm] += reward
        beta[arm] += 1.0 - reward
        return BetaPerArm(alpha, beta)

    def mean(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta)

    def thompson_action(self, rng: np.random.Generator) -> int:
        return int(np.argmax(rng.beta(self.alpha, self.beta)))


def beta_kl(a1: np.ndarray, b1: np.ndarray, a2: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """KL(Beta(a1,b1) || Beta(a2,b2)), elementwise."""
    from scipy.special import betaln, digamma

    return (betaln(a2, b2) - betaln(a1, b1)
            + (a1 - a2) * digamma(a1) + (b1 - b2) * digamma(b1)
            + (a2 - a1 + b2 - b1) * digamma(a1 + b1))


# ---------------------------------------------------------------------------
# semicircle: binned angle posterior via candidate-set elimination


class BinnedAnglePosterior:
    """Posterior over the target angle on [0, pi], 10 bins x 100 candidates.

    Capture events are indicator likelihoods over angle sets with no closed
    form; each bin is sub-sampled at 100 angles and candidates inconsistent
    with an observed capture / non-capture are eliminated. Post-capture
    teleport poses have task-independent likelihood and drop out.
    """

    __slots__ = ("angles", "log_w", "n_bins", "capture_radius", "target_radius",
                 "n_substeps", "dt")

    def __init__(self, n_bins: int = 10, per_bin: int = 100,
                 capture_radius: float = 0.05, target_radius: float = 0.2,
                 n_substeps: int = 10, dt: float = 0.01,
                 angles: np.ndarray | None = None, log_w: np.ndarray | None = None):
        self.n_bins = n_bins
        self.capture_radius = capture_radius
        self.target_radius = target_radius
        self.n_substeps = n_substeps
        self.dt = dt
        if angles is None:
            n = n_bins * per_bin
            angles = (np.arange(n) + 0.5) * (np.pi / n)  # sub-bin midpoints
        self.angles = angles
        if log_w is None:
            log_w = np.full(len(angles), -np.log(len(angles)))
        self.log_w = _normalize_log(log_w)

    def _captured(self, x: float, y: float, phi: float, action: np.ndarray) -> np.ndarray:
        xs, ys, _ = substep_path(x, y, phi, action, self.n_substeps, self.dt)
        tx = self.target_radius * np.cos(self.angles)
        ty = self.target_radius * np.sin(self.angles)
        d2 = (xs[:, None] - tx[None, :]) ** 2 + (ys[:, None] - ty[None, :]) ** 2
        return np.any(d2 <= self.capture_radius**2, axis=0)

    def update(self, x: float, y: float, phi: float, action: np.ndarray,
               captured: bool) -> "BinnedAnglePosterior":
        consistent = self._captured(x, y, phi, action)
        if not captured:
            consistent = ~consistent
        log_w = np.where(consistent, self.log_w, -np.inf)
        return BinnedAnglePosterior(
            n_bins=self.n_bins, capture_radius=self.capture_radius,
            target_radius=self.target_radius, n_substeps=self.n_substeps,
            dt=self.dt, angles=self.angles, log_w=log_w)

    def bin_masses(self) -> np.ndarray:
        w = np.exp(self.log_w)
        return w.reshape(self.n_bins, -1).sum(axis=1)

    def sample_angle(self, rng: np.random.Generator) -> float:
        return float(rng.choice(self.angles, p=np.exp(self.log_w)))


# ---------------------------------------------------------------------------
# noisy target: grid posterior over the square


class GridTargetPosterior:
    """Posterior over the target location on a G x G grid of cell centers."""

    __slots__ = ("centers", "log_w", "n")

    def __init__(self, n: int = 51, half_width: float = 1.0,
                 centers: np.ndarray | None = None, log_w: np.ndarray | None = None):
        self.n = n
        if centers is None:
            h = 2.0 * half_width / n
            axis = -half_width + (np.arange(n) + 0.5) * h
            gx, gy = np.meshgrid(axis, axis, indexing="ij")
            centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
        self.centers = centers
        if log_w is None:
            log_w = np.full(len(centers), -np.log(len(centers)))
        self.log_w = _normalize_log(log_w)

    def update(self, pos: tuple[float, float], reward: float, reward_step: bool
               ) -> "GridTargetPosterior":
        if not reward_step:
            return self
        d2 = ((self.centers[:, 0] - pos[0]) ** 2 + (self.centers[:, 1] - pos[1]) ** 2)
        p = np.minimum(0.5, 1.0 / (1.0 + d2))
        with np.errstate(divide="ignore"):
            step = np.log(p) if reward > 0.5 else np.log1p(-p)
        return GridTargetPosterior(n=self.n, centers=self.centers,
                                   log_w=self.log_w + step)

    def masses(self) -> np.ndarray:
        return np.exp(self.log_w).reshape(self.n, self.n)

    def mean(self) -> np.ndarray:
        return np.exp(self.log_w) @ self.centers


# ---------------------------------------------------------------------------
# numpad: joint alive-set posterior, re-factorized marginals


class NumpadPosterior:
    """Exact posterior over a finite Numpad task list.

    Tracks, per candidate task, the deterministic (progress, claimed) state
    implied by the observed entry history; candidates whose predicted
    (lights, reward) ever disagree with observations are eliminated. The
    initial cue (visible digits) constrains the support.
    """

    def __init__(self, tasks: list[NumpadTask], alive: np.ndarray | None = None,
                 progress: list[int] | None = None,
                 claimed: list[tuple[bool, ...]] | None = None):
        self.tasks = tasks
        self.alive = np.ones(len(tasks), dtype=bool) if alive is None else alive
        self.progress = [0] * len(tasks) if progress is None else progress
        self.claimed = ([(False,) * len(t.tiles()) for t in tasks]
                        if claimed is None else claimed)
        if not self.alive.any():
            raise ZeroMassPosterior("all Numpad tasks eliminated")

    def condition_on_cue(self, description: np.ndarray,
                         mask: tuple[int, int, int, int]) -> "NumpadPosterior":
        alive = self.alive.copy()
        for i, task in enumerate(self.tasks):
            if not alive[i]:
                continue
            desc = task.description()
            for pos, visible in enumerate(mask):
                if visible and desc[pos] != description[pos]:
                    alive[i] = False
                    break
        return NumpadPosterior(self.tasks, alive, list(self.progress), list(self.claimed))

    def update(self, entered_cell: int | None, lights: np.ndarray, reward: float
               ) -> "NumpadPosterior":
        """Condition on one step: the cell entered (None if no cell change),
        the lights observed after the step, and the reward received."""
        alive = self.alive.copy()
        progress = list(self.progress)
        claimed = list(self.claimed)
        for i, task in enumerate(self.tasks):
            if not alive[i]:
                continue
            tiles = task.tiles()
            if entered_cell is None:
                pred_reward = 0.0
            else:
                progress[i], claimed[i], pred_reward, _ = numpad_entry(
                    tiles, progress[i], claimed[i], entered_cell)
            if pred_reward != reward or not np.array_equal(
                    lights_vector(tiles, progress[i]), lights):
                alive[i] = False
        return NumpadPosterior(self.tasks, alive, progress, claimed)

    def weights(self) -> np.ndarray:
        return self.alive / self.alive.sum()

    def marginals(self) -> np.ndarray:
        """(4, 10) per-position class marginals of the alive set."""
        w = self.weights()
        out = np.zeros((4, 10))
        for i, task in enumerate(self.tasks):
            if w[i] > 0:
                for pos, cls in enumerate(task.description()):
                    out[pos, int(cls)] += w[i]
        return out

    def log_prob_task(self, task: NumpadTask) -> float:
        """Joint log-probability the posterior assigns to `task`."""
        w = self.weights()
        try:
            idx = self.tasks.index(task)
        except ValueError:
            return -np.inf
        return float(np.log(w[idx])) if w[idx] > 0 else -np.inf


# ---------------------------------------------------------------------------
# Thompson baselines


def steer_action(x: float, y: float, phi: float, target: tuple[float, float],
                 step_reach: float = 0.1, turn_per_step: float = 0.2 * np.pi
                 ) -> np.ndarray:
    """Proportional steer-and-go controller toward a fixed target point."""
    dx, dy = target[0] - x, target[1] - y
    dist = float(np.hypot(dx, dy))
    desired = np.arctan2(dy, dx)
    err = (desired - phi + np.pi) % (2.0 * np.pi) - np.pi
    a_turn = float(np.clip(err / turn_per_step, -1.0, 1.0))
    a_speed = float(np.clip(dist / step_reach, 0.0, 1.0) * max(np.cos(err), 0.0))
    return np.asarray([a_speed, a_turn])


class SemicircleThompson:
    """Per-episode Thompson sampling on the semicircle.

    At each episode start, samples one angle from the current posterior and
    drives straight to that target for the whole episode; the posterior keeps
    updating from observed (pose, action, capture) transitions, but the
    committed angle is resampled only at episode boundaries.
    """

    def __init__(self, posterior: BinnedAnglePosterior, rng: np.random.Generator,
                 target_radius: float = 0.2):
        self.posterior = posterior
        self.rng = rng
        self.target_radius = target_radius
        self.committed_angle: float | None = None

    def begin_episode(self) -> None:
        self.committed_angle = self.posterior.sample_angle(self.rng)

    def act(self, x: float, y: float, phi: float) -> np.ndarray:
        if self.committed_angle is None:
            raise RuntimeError("begin_episode() not called")
        target = (self.target_radius * np.cos(self.committed_angle),
                  self.target_radius * np.sin(self.committed_angle))
        return steer_action(x, y, phi, target)

    def observe(self, x: float, y: float, phi: float, action: np.ndarray,
                captured: bool) -> None:
        self.posterior = self.posterior.update(x, y, phi, action, captured)
