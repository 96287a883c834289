"""Evaluation protocols: frozen-parameter returns per regime, bandit
reference baselines, semicircle capture-behavior metrics, and on-policy
belief NLL. None of these ever write to replay."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..agents import Agent
from ..learners import belief_log_prob, default_task_info
from ..oracle import BetaPerArm, BinnedAnglePosterior, SemicircleThompson

REGIMES = ("fully-hidden", "partially-visible", "fully-visible")


@dataclass
class EvalResult:
    mean_return: float
    stderr: float
    returns: np.ndarray
    split: str
    regime: str

    def __str__(self) -> str:
        return (f"{self.split}/{self.regime}: "
                f"{self.mean_return:.3f} ± {self.stderr:.3f} "
                f"({len(self.returns)} episodes)")


def evaluate(agent: Agent, env, split: str = "validation",
             regime: str = "fully-hidden", n_episodes: int = 20,
             rng: np.random.Generator | None = None,
             act_mode: str = "sample") -> EvalResult:
    """Mean episodic return ± standard error with frozen parameters.

    Regimes other than fully-hidden only exist for Numpad's task cue; they
    temporarily override the env's cue regime for these episodes.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r} (known: {REGIMES})")
    if regime != "fully-hidden" and getattr(env, "kind", None) != "numpad":
        raise ValueError(f"regime {regime!r} is only valid for the numpad env")
    rng = rng if rng is not None else np.random.default_rng(0)

    saved_regime = getattr(env, "cue_regime", None)
    if getattr(env, "kind", None) == "numpad":
        env.cue_regime = regime
    try:
        returns = np.array([
            run_episode(agent, env, env.sample_task(rng, split), rng,
                        act_mode=act_mode)[0]
            for _ in range(n_episodes)])
    finally:
        if saved_regime is not None:
            env.cue_regime = saved_regime
    stderr = float(returns.std(ddof=1) / math.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    return EvalResult(float(returns.mean()), stderr, returns, split, regime)


def run_episode(agent: Agent, env, task, rng: np.random.Generator,
                act_mode: str = "sample", record=None) -> tuple[float, int]:
    """One frozen-parameter episode; returns (return, steps).

    `record(t, state, obs, action, reward, info)` is called per step when
    given (belief dumps, behavior metrics).
    """
    state, obs = env.reset(task, rng)
    carry = agent.initial_carry()
    total, t, done = 0.0, 0, False
    while not done:
        action, _, carry, info = agent.act(obs, carry, rng, mode=act_mode)
        prev_state = state
        state, obs, reward, done = env.step(state, action, task, rng)
        if record is not None:
            record(t, prev_state, obs, action, reward, info)
        total += reward
        t += 1
    return total, t


# ---------------------------------------------------------------------------
# bandit reference baselines


def bandit_thompson_reference(env, n_episodes: int, rng: np.random.Generator,
                              split: str = "validation") -> float:
    """Monte-Carlo mean return of per-step Thompson sampling with exact
    Beta posteriors, over `n_episodes` tasks drawn from the split."""
    total = 0.0
    for _ in range(n_episodes):
        task = env.sample_task(rng, split)
        probs = np.asarray(task.probs)
        post = BetaPerArm.uniform_prior(env.n_arms)
        for _ in range(env.horizon):
            arm = post.thompson_action(rng)
            reward = float(rng.random() < probs[arm])
            post = post.update(arm, reward)
            total += reward
    return total / n_episodes


def bandit_uniform_reference(env, split: str = "validation") -> float:
    """Exact mean return of the uniform-random policy: horizon times the
    mean arm probability, averaged over the split's tasks."""
    tasks = env.split.tasks(split)
    return env.horizon * float(np.mean([np.mean(t.probs) for t in tasks]))


# ---------------------------------------------------------------------------
# semicircle capture behavior (Bayes-style sweep vs Thompson point guesses)


@dataclass
class CaptureBehavior:
    episodes_to_first_capture: int  # 1-based; max_episodes + 1 when never
    sweep_coverage: float  # fraction of angle bins visited before 1st capture
    captured: bool


def _angle_bins_visited(positions: list[tuple[float, float]], n_bins: int,
                        r_lo: float = 0.1, r_hi: float = 0.3) -> set[int]:
    """Bins of [0, pi] whose radius band [r_lo, r_hi] the path entered."""
    visited = set()
    for x, y in positions:
        r = math.hypot(x, y)
        ang = math.atan2(y, x)
        if r_lo <= r <= r_hi and 0.0 <= ang <= math.pi:
            visited.add(min(int(ang / math.pi * n_bins), n_bins - 1))
    return visited


def capture_behavior(controller, env, task, rng: np.random.Generator,
                     max_episodes: int = 10, n_bins: int = 20) -> CaptureBehavior:
    """Run semicircle episodes on one fixed task until the first capture.

    `controller` provides `begin_episode()`, `act(x, y, phi) -> action`, and
    `observe(x, y, phi, action, captured)`. Coverage counts the angle bins
    swept before the first capture, accumulated across all attempted
    episodes, so a broad within-episode search scores high even when capture
    happens in episode one.
    """
    visited: set[int] = set()
    for episode in range(1, max_episodes + 1):
        controller.begin_episode()
        state, _ = env.reset(task, rng)
        for _ in range(env.horizon):
            action = controller.act(state.x, state.y, state.phi)
            prev = state
            state, _, reward, done = env.step(state, action, task, rng)
            captured = reward > 0.0
            path = _substep_positions(prev, action, env)
            visited |= _angle_bins_visited(path, n_bins)
            controller.observe(prev.x, prev.y, prev.phi, action, captured)
            if captured:
                return CaptureBehavior(episode, len(visited) / n_bins, True)
            if done:
                break
    return CaptureBehavior(max_episodes + 1, len(visited) / n_bins, False)


def _substep_positions(state, action, env) -> list[tuple[float, float]]:
    from ..envs.pointmass import substep_path

    xs, ys, _ = substep_path(state.x, state.y, state.phi, action,
                             env.n_substeps, env.dt)
    return list(zip(xs, ys))


class AgentSemicircleController:
    """Adapts a trained Agent to the capture_behavior protocol; memory resets
    every episode (the agent re-explores within each one)."""

    def __init__(self, agent: Agent, env, rng: np.random.Generator,
                 act_mode: str = "sample"):
        self.agent = agent
        self.env = env
        self.rng = rng
        self.act_mode = act_mode

    def begin_episode(self) -> None:
        self.carry = self.agent.initial_carry()
        self.prev_action = np.zeros(self.env.action_dim)
        self.prev_reward = 0.0

    def act(self, x: float, y: float, phi: float) -> np.ndarray:
        obs = np.concatenate([[x, y, np.cos(phi), np.sin(phi)],
                              np.clip(self.prev_action, -1.0, 1.0),
                              [self.prev_reward]])
        action, _, self.carry, _ = self.agent.act(obs, self.carry, self.rng,
                                                  mode=self.act_mode)
        return action

    def observe(self, x, y, phi, action, captured) -> None:
        self.prev_action = np.asarray(action)
        self.prev_reward = float(captured)


def make_thompson_controller(env, rng: np.random.Generator) -> SemicircleThompson:
    posterior = BinnedAnglePosterior(
        capture_radius=env.capture_radius, target_radius=env.target_radius,
        n_substeps=env.n_substeps, dt=env.dt)
    return SemicircleThompson(posterior, rng, target_radius=env.target_radius)


# ---------------------------------------------------------------------------
# belief NLL on fresh episodes vs stored replay unrolls


def replay_belief_nll(agent: Agent, replay, rng: np.random.Generator,
                      n_batches: int = 8, batch_size: int = 32) -> float:
    """Mean per-step belief NLL on stored replay unrolls, teacher-forced from
    their stored RNN states (the training-data side of the generalization
    gap; `online_belief_nll` is the fresh-episode side)."""
    from ..nn import Tensor, autodiff as ad
    from ..learners import stack_batch

    if agent.belief_net is None:
        raise ValueError("baseline agents carry no belief head to score")
    nll_sum, n_steps = 0.0, 0.0
    with ad.no_grad():
        for _ in range(n_batches):
            batch = stack_batch(replay.sample_uniform(batch_size, rng))
            B, U = batch.rewards.shape
            state = agent.belief_net.initial_state(B)
            if batch.belief_state is not None:
                state = (Tensor(batch.belief_state[0]),
                         Tensor(batch.belief_state[1]))
            for t in range(U):
                _, dist, _, state = agent.belief_net.step(
                    Tensor(batch.obs[:, t]), state, rng, sample_ib=True)
                lp = belief_log_prob(dist, batch.task_info[:, t])
                nll_sum -= float(np.sum(lp.data * batch.valid[:, t]))
                n_steps += float(batch.valid[:, t].sum())
    return nll_sum / max(n_steps, 1.0)


def online_belief_nll(agent: Agent, env, rng: np.random.Generator,
                      n_episodes: int, split: str = "validation",
                      task_info_fn=None) -> float:
    """Mean per-step belief NLL on fresh on-policy episodes."""
    task_info_fn = task_info_fn or default_task_info
    nll_sum, n_steps = 0.0, 0
    for _ in range(n_episodes):
        task = env.sample_task(rng, split)
        state, obs = env.reset(task, rng)
        carry = agent.initial_carry()
        done, t = False, 0
        while not done:
            target = np.asarray(task_info_fn(env, task, t, obs), dtype=np.float64)
            action, _, carry, info = agent.act(obs, carry, rng)
            if "belief_dist" not in info:
                raise ValueError("agent has no belief head to score")
            lp = belief_log_prob(info["belief_dist"], target.reshape(1, -1))
            nll_sum -= float(lp.data[0])
            n_steps += 1
            state, obs, _, done = env.step(state, action, task, rng)
            t += 1
    return nll_sum / max(n_steps, 1)


# ---------------------------------------------------------------------------
# belief marginal dumps


def dist_marginals(dist, gaussian_bins: int = 20,
                   beta_bins: int = 10) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-factor marginal probabilities for a batch-1 belief distribution.

    Returns (probs of shape (k, c), lo (k,), hi (k,)): categorical-family
    heads report their native masses over [0, c); continuous heads are
    discretized into equal-width bins — Beta over [0, 1], Gaussian over
    mean +/- 6 sigma — via exact CDF differences, renormalized so each row
    sums to one.
    """
    from scipy import stats

    from ..nn.heads import (BetaPerDim, BinnedDensity, Categorical,
                            DiagGaussian, FactoredCategorical)

    if isinstance(dist, FactoredCategorical):
        p = np.exp(dist.log_probs[0])
        k, c = p.shape
        return p, np.zeros(k), np.full(k, float(c))
    if isinstance(dist, Categorical):
        p = np.exp(dist.log_probs.data[0])[None, :]
        return p, np.zeros(1), np.array([float(p.shape[-1])])
    if isinstance(dist, BinnedDensity):
        return (dist.masses[0][None, :], np.array([dist.lo]),
                np.array([dist.hi]))
    if isinstance(dist, BetaPerDim):
        a, b = dist.alpha.data[0], dist.beta.data[0]
        edges = np.linspace(0.0, 1.0, beta_bins + 1)
        cdf = stats.beta.cdf(edges[None, :], a[:, None], b[:, None])
        p = np.diff(cdf, axis=-1)
        return (p / p.sum(axis=-1, keepdims=True),
                np.zeros(a.shape), np.ones(a.shape))
    if isinstance(dist, DiagGaussian):
        mu, sd = dist.mean.data[0], dist.std.data[0]
        lo, hi = mu - 6.0 * sd, mu + 6.0 * sd
        frac = np.linspace(0.0, 1.0, gaussian_bins + 1)[None, :]
        pts = lo[:, None] + (hi - lo)[:, None] * frac
        cdf = stats.norm.cdf(pts, mu[:, None], sd[:, None])
        p = np.diff(cdf, axis=-1)
        return p / p.sum(axis=-1, keepdims=True), lo, hi
    raise ValueError(f"unsupported belief distribution {type(dist).__name__}")


def dump_belief_marginals(agent: Agent, env, rng: np.random.Generator,
                          n_episodes: int = 5, split: str = "validation",
                          act_mode: str = "sample") -> list[dict]:
    """Per-step belief marginals and true-task log-probs over fresh episodes.

    Each record holds {episode, step, marginals (k, c), lo (k,), hi (k,),
    true_log_prob}; the log-prob scores the hidden task's description under
    the full belief head. Baseline agents carry no belief head and raise.
    """
    if agent.spec.architecture == "baseline":
        raise ValueError("baseline agents carry no belief head to dump")
    records: list[dict] = []
    for ep in range(n_episodes):
        task = env.sample_task(rng, split)
        desc = np.asarray(env.task_description(task), dtype=np.float64)

        def record(t, state, obs, action, reward, info, ep=ep, desc=desc):
            dist = info.get("belief_dist")
            if dist is None:
                raise ValueError("agent reported no belief distribution")
            probs, lo, hi = dist_marginals(dist)
            lp = float(belief_log_prob(dist, desc.reshape(1, -1)).data[0])
            records.append({"episode": ep, "step": t, "marginals": probs,
                            "lo": lo, "hi": hi, "true_log_prob": lp})

        run_episode(agent, env, task, rng, act_mode=act_mode, record=record)
    return records
