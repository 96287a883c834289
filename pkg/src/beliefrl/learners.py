"""Training rules: SVG(0) with IB and TD(0)/Retrace targets, the
single-threaded collection/update loop, the supervised belief loss, and PPO
with GAE.

Loss sign convention: everything here is a loss to minimize — negative
log-likelihood for the belief net and -E[Q] (plus KL penalties, minus scaled
entropy) for the policy.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .agents import Agent, AgentSpec, action_input, target_sync
from .nn import ParameterSet, Tensor, adam_update
from .nn import autodiff as ad
from .nn.heads import (
    BetaPerDim,
    BinnedDensity,
    Categorical,
    DiagGaussian,
    FactoredCategorical,
)
from .replay import ReplayBuffer, ReplayEntry, segment_episode

ALGORITHMS = ("svg0-retrace", "svg0-td0", "ppo")


@dataclass
class LearnerConfig:
    algorithm: str = "svg0-td0"
    actor_lr: float = 5e-4
    critic_lr: float = 5e-4
    belief_lr: float = 5e-4
    batch_size: int = 64
    unroll_length: int = 20
    target_period: int = 500
    entropy_coeff: float = 0.01
    discount: float = 0.99
    retrace_lambda: float = 0.95
    gae_lambda: float = 0.95
    ppo_clip: float = 0.2
    ppo_epochs: int = 4  # gradient steps per on-policy batch
    n_train_iters: int = 4  # actor/critic updates per collected unroll
    value_samples: int = 1  # samples for the nested E_z E_a E_z value estimate

    def validate(self, spec: AgentSpec | None = None) -> list[str]:
        problems = []
        if self.algorithm not in ALGORITHMS:
            problems.append(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 < self.discount <= 1.0:
            problems.append("discount must lie in (0, 1]")
        if self.ppo_clip <= 0.0:
            problems.append("ppo_clip must be positive")
        for name in ("actor_lr", "critic_lr", "belief_lr"):
            if getattr(self, name) <= 0.0:
                problems.append(f"{name} must be positive")
        if self.batch_size < 1 or self.unroll_length < 1:
            problems.append("batch_size and unroll_length must be >= 1")
        if self.target_period < 1:
            problems.append("target_period must be >= 1")
        if self.value_samples < 1:
            problems.append("value_samples must be >= 1")
        if self.n_train_iters < 1 or self.ppo_epochs < 1:
            problems.append("n_train_iters and ppo_epochs must be >= 1")
        if spec is not None and self.algorithm.startswith("svg0"):
            if spec.action_kind != "continuous":
                problems.append("SVG(0) requires a continuous action space")
            if not spec.critic_takes_action:
                problems.append("SVG(0) requires a Q critic (critic_takes_action)")
        if spec is not None and self.algorithm == "ppo" and spec.critic_takes_action:
            problems.append("PPO uses a state-value critic (critic_takes_action=False)")
        return problems


@dataclass
class LossReport:
    policy_loss: float = math.nan
    critic_loss: float = math.nan
    belief_nll: float = math.nan
    ib_kl_actor: float = 0.0
    ib_kl_critic: float = 0.0
    ib_kl_belief: float = 0.0
    entropy: float = math.nan
    grad_norm_actor: float = 0.0
    grad_norm_critic: float = 0.0
    grad_norm_belief: float = 0.0

    def finite(self) -> bool:
        """True when every loss is finite; belief_nll may be NaN (no belief path)."""
        for name, v in vars(self).items():
            if name == "belief_nll" and math.isnan(v):
                continue
            if not math.isfinite(v):
                return False
        return True

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    obs: np.ndarray  # (B, U+1, D)
    actions: np.ndarray  # (B, U, A) or (B, U)
    rewards: np.ndarray  # (B, U)
    dones: np.ndarray  # (B, U)
    valid: np.ndarray  # (B, U)
    behavior_log_probs: np.ndarray  # (B, U)
    task_info: np.ndarray  # (B, U, d)
    actor_state: tuple[np.ndarray, np.ndarray] | None  # (B, H) pairs
    critic_state: tuple[np.ndarray, np.ndarray] | None
    belief_state: tuple[np.ndarray, np.ndarray] | None


def _stack_states(entries: list[ReplayEntry], role: str):
    states = [getattr(e, f"{role}_state") for e in entries]
    if states[0] is None:
        if any(s is not None for s in states):
            raise ValueError(f"inconsistent {role} RNN states in batch")
        return None
    h = np.stack([s[0].reshape(-1) for s in states])
    c = np.stack([s[1].reshape(-1) for s in states])
    return h, c


def stack_batch(entries: list[ReplayEntry]) -> Batch:
    info = np.stack([e.task_info for e in entries])
    if info.ndim == 2:
        info = info[:, :, None]
    return Batch(
        obs=np.stack([e.observations for e in entries]),
        actions=np.stack([e.actions for e in entries]),
        rewards=np.stack([e.rewards for e in entries]),
        dones=np.stack([e.dones for e in entries]).astype(np.float64),
        valid=np.stack([e.valid for e in entries]),
        behavior_log_probs=np.stack([e.behavior_log_probs for e in entries]),
        task_info=info,
        actor_state=_stack_states(entries, "actor"),
        critic_state=_stack_states(entries, "critic"),
        belief_state=_stack_states(entries, "belief"),
    )


def _tensor_state(pair):
    return None if pair is None else (Tensor(pair[0]), Tensor(pair[1]))


# ---------------------------------------------------------------------------
# belief loss


def belief_log_prob(dist, target_rows: np.ndarray) -> Tensor:
    """Dispatch log b(h_t | z_t) for the supported head families; (B,)."""
    if isinstance(dist, (DiagGaussian, BetaPerDim)):
        return dist.log_prob(target_rows)
    if isinstance(dist, BinnedDensity):
        return dist.log_prob(target_rows[:, 0])
    if isinstance(dist, FactoredCategorical):
        return dist.log_prob(np.rint(target_rows).astype(np.int64))
    if isinstance(dist, Categorical):
        idx = np.rint(target_rows[:, 0]).astype(np.int64)
        n = dist.log_probs.shape[-1]
        if np.any(idx < 0) or np.any(idx >= n):
            raise ValueError("belief target outside the categorical head support")
        return dist.log_prob(idx)
    raise ValueError(f"unsupported belief distribution {type(dist).__name__}")


def belief_loss(dists: list, targets: np.ndarray, valid: np.ndarray,
                ib_kls: list, coeff: float) -> tuple[Tensor, float, float]:
    """-E[log b(h_t|z)] + coeff * KL, averaged over valid (batch, time) cells.

    Returns (loss tensor, nll value, kl value).
    """
    denom = max(float(valid.sum()), 1.0)
    nll_sum = None
    kl_sum = None
    for t, dist in enumerate(dists):
        v = Tensor(valid[:, t])
        nll_t = ad.sum((0.0 - belief_log_prob(dist, targets[:, t])) * v)
        kl_t = ad.sum(ib_kls[t] * v)
        nll_sum = nll_t if nll_sum is None else nll_sum + nll_t
        kl_sum = kl_t if kl_sum is None else kl_sum + kl_t
    nll = nll_sum * (1.0 / denom)
    kl = kl_sum * (1.0 / denom)
    return nll + coeff * kl, float(nll.data), float(kl.data)


# ---------------------------------------------------------------------------
# critic targets


def critic_targets(rewards: np.ndarray, dones: np.ndarray, valid: np.ndarray,
                   v_next: np.ndarray, mode: str, gamma: float,
                   q_target: np.ndarray | None = None,
                   log_pi: np.ndarray | None = None,
                   log_mu: np.ndarray | None = None,
                   retrace_lambda: float = 0.95) -> np.ndarray:
    """Per-step regression targets, (B, U).

    td0:      G_t = r_t + gamma * (1 - done_t) * V_{t+1}
    retrace:  G_t = Q_t + sum_{s>=t} gamma^{s-t} (prod_{i=t+1..s} c_i) delta_s,
              delta_s = r_s + gamma (1-done_s) V_{s+1} - Q_s,
              c_i = retrace_lambda * min(1, pi(a_i)/mu(a_i)),
    truncated at the unroll end (the final delta bootstraps with V_U).
    """
    not_done = 1.0 - dones
    if mode == "td0":
        return rewards + gamma * not_done * v_next
    if mode != "retrace":
        raise ValueError(f"unknown critic target mode {mode!r}")
    if q_target is None or log_pi is None or log_mu is None:
        raise ValueError("retrace mode requires q_target and behavior/online log-probs")
    B, U = rewards.shape
    c = retrace_lambda * np.minimum(1.0, np.exp(log_pi - log_mu)) * valid
    delta = (rewards + gamma * not_done * v_next - q_target) * valid
    correction = np.zeros((B, U))
    acc = np.zeros(B)
    for t in range(U - 1, -1, -1):
        acc = delta[:, t] + (gamma * c[:, t + 1] * acc if t + 1 < U else 0.0)
        correction[:, t] = acc
    return q_target + correction


# ---------------------------------------------------------------------------
# SVG(0) update (Algorithm-1 loop body)


def _masked_mean(terms: list[Tensor], valid: np.ndarray) -> Tensor:
    denom = max(float(valid.sum()), 1.0)
    total = None
    for t, term in enumerate(terms):
        s = ad.sum(term * Tensor(valid[:, t]))
        total = s if total is None else total + s
    return total * (1.0 / denom)


@dataclass
class SvgLosses:
    """The three loss tensors, built from one shared forward pass."""

    policy: Tensor
    critic: Tensor
    belief: Tensor | None
    report: LossReport


def svg0_losses(batch: Batch, agent: Agent, cfg: LearnerConfig,
                rng: np.random.Generator) -> SvgLosses:
    """Build the belief, critic, and policy loss graphs for one batch.

    All three are evaluated at the current parameter values; their graphs are
    disjoint (stop-gradients cut belief->actor/critic, frozen targets cut
    everything but the reparameterized action path), so each can be
    backpropagated independently. TD(0) vs Retrace targets follow
    cfg.algorithm.
    """
    spec = agent.spec
    B, U = batch.rewards.shape
    valid = batch.valid
    mode = "retrace" if cfg.algorithm == "svg0-retrace" else "td0"

    obs_rows = [Tensor(batch.obs[:, t]) for t in range(U + 1)]
    taken_rows = [Tensor(action_input(spec, batch.actions[:, t])) for t in range(U)]

    # --- belief forward: features f_0..f_U, dists/KLs for 0..U-1 ---
    feats: list[Tensor | None] = [None] * (U + 1)
    belief_dists: list = []
    belief_kls: list = []
    if agent.belief_net is not None:
        bstate = _tensor_state(batch.belief_state) or agent.belief_net.initial_state(B)
        for t in range(U + 1):
            z, dist, kl, bstate = agent.belief_net.step(obs_rows[t], bstate, rng,
                                                        sample_ib=True)
            feats[t] = z
            if t < U:
                belief_dists.append(dist)
                belief_kls.append(kl)

    def joined(t: int, with_features: bool) -> Tensor:
        if feats[t] is None or not with_features:
            return obs_rows[t]
        return ad.concat([obs_rows[t], ad.stop_gradient(feats[t])], axis=-1)

    actor_in = [joined(t, True) for t in range(U + 1)]
    critic_in = [joined(t, spec.critic_uses_belief_features) for t in range(U + 1)]

    # --- online actor ---
    astate = _tensor_state(batch.actor_state) or agent.actor_net.initial_state(B)
    actor_dists, actor_kls, actor_aux = [], [], []
    for t in range(U):
        dist, trunk, kl, astate = agent.actor_net.step(actor_in[t], astate, rng,
                                                       sample_ib=True)
        actor_dists.append(dist)
        actor_kls.append(kl)
        if agent.actor_aux_head is not None:
            actor_aux.append(agent.actor_aux_head(trunk))

    # --- online critic at the taken actions ---
    cstate = _tensor_state(batch.critic_state) or agent.critic_net.initial_state(B)
    q_online, critic_kls, critic_aux = [], [], []
    for t in range(U):
        q, trunk, kl, cstate = agent.critic_net.step(critic_in[t], taken_rows[t],
                                                     cstate, rng, sample_ib=True)
        q_online.append(q)
        critic_kls.append(kl)
        if agent.critic_aux_head is not None:
            critic_aux.append(agent.critic_aux_head(trunk))

    # --- targets (no gradients) ---
    with ad.no_grad():
        log_pi = np.zeros((B, U))
        for t in range(U):
            log_pi[:, t] = actor_dists[t].log_prob(batch.actions[:, t]).data

        tastate = _tensor_state(batch.actor_state) or agent.actor_target_net.initial_state(B)
        tcstate = _tensor_state(batch.critic_state) or agent.critic_target_net.initial_state(B)
        tc_states = []  # target-critic state before each step, for policy probes
        V = np.zeros((B, U + 1))
        q_taken_tgt = np.zeros((B, U))
        for t in range(U + 1):
            tadist, _, _, tastate = agent.actor_target_net.step(actor_in[t], tastate,
                                                                rng, sample_ib=True)
            tc_states.append(tcstate)
            samples = np.zeros(B)
            for _ in range(cfg.value_samples):
                a_probe = tadist.sample(rng)
                qv, _, _, _ = agent.critic_target_net.step(
                    critic_in[t], Tensor(action_input(spec, a_probe)), tcstate, rng,
                    sample_ib=True)
                samples += qv.data
            V[:, t] = samples / cfg.value_samples
            if t < U:
                q_tk, _, _, tcstate = agent.critic_target_net.step(
                    critic_in[t], taken_rows[t], tcstate, rng, sample_ib=True)
                q_taken_tgt[:, t] = q_tk.data

        targets = critic_targets(
            batch.rewards, batch.dones, valid, V[:, 1:], mode, cfg.discount,
            q_target=q_taken_tgt, log_pi=log_pi,
            log_mu=batch.behavior_log_probs, retrace_lambda=cfg.retrace_lambda)

    # --- critic loss ---
    sq_terms = [ad.square(q_online[t] - Tensor(targets[:, t])) for t in range(U)]
    critic_loss = _masked_mean(sq_terms, valid)
    critic_kl_mean = _masked_mean(critic_kls, valid)
    critic_loss = critic_loss + spec.critic.ib_coeff * critic_kl_mean
    critic_aux_nll = 0.0
    if critic_aux:
        nll = _masked_mean([0.0 - belief_log_prob(critic_aux[t], batch.task_info[:, t])
                            for t in range(U)], valid)
        critic_aux_nll = float(nll.data)
        critic_loss = critic_loss + spec.aux_belief_weight * nll

    # --- policy loss: -E[Q_target(z, a~pi)] + lambda KL - alpha H ---
    q_probe_terms = []
    for t in range(U):
        eps = rng.standard_normal((B, spec.action_dim))
        a_tilde = actor_dists[t].rsample(eps)
        q_probe, _, _, _ = agent.critic_target_net.step(critic_in[t], a_tilde,
                                                        tc_states[t], rng,
                                                        sample_ib=True)
        q_probe_terms.append(q_probe)
    entropy_mean = _masked_mean([d.entropy() for d in actor_dists], valid)
    actor_kl_mean = _masked_mean(actor_kls, valid)
    policy_loss = (0.0 - _masked_mean(q_probe_terms, valid)
                   + spec.actor.ib_coeff * actor_kl_mean
                   - cfg.entropy_coeff * entropy_mean)
    actor_aux_nll = 0.0
    if actor_aux:
        nll = _masked_mean([0.0 - belief_log_prob(actor_aux[t], batch.task_info[:, t])
                            for t in range(U)], valid)
        actor_aux_nll = float(nll.data)
        policy_loss = policy_loss + spec.aux_belief_weight * nll

    # --- belief loss ---
    b_loss = None
    nll_val = kl_val = math.nan
    if belief_dists:
        b_loss, nll_val, kl_val = belief_loss(belief_dists, batch.task_info, valid,
                                              belief_kls, spec.belief.ib_coeff)
    elif actor_aux or critic_aux:
        nll_val = 0.5 * (actor_aux_nll + critic_aux_nll)

    report = LossReport(
        policy_loss=float(policy_loss.data), critic_loss=float(critic_loss.data),
        belief_nll=nll_val, ib_kl_actor=float(actor_kl_mean.data),
        ib_kl_critic=float(critic_kl_mean.data),
        ib_kl_belief=kl_val if belief_dists else 0.0,
        entropy=float(entropy_mean.data))
    return SvgLosses(policy=policy_loss, critic=critic_loss, belief=b_loss,
                     report=report)


def svg0_update(batch: Batch, agent: Agent, cfg: LearnerConfig,
                rng: np.random.Generator, step: int,
                update_actor_critic: bool = True,
                update_belief: bool = True) -> LossReport:
    """One Algorithm-1 learner step on a batch of unrolls.

    Computes the belief, critic, and policy losses from the current
    parameters, takes (up to) three Adam steps, and hard-syncs targets on
    period.
    """
    losses = svg0_losses(batch, agent, cfg, rng)
    report = losses.report
    if not report.finite():
        raise RuntimeError(f"non-finite loss in svg0_update: {report.to_dict()}")

    if update_belief and losses.belief is not None and agent.params.belief is not None:
        agent.params.belief.zero_grad()
        ad.backward(losses.belief)
        report.grad_norm_belief = agent.params.belief.grad_norm()
        adam_update(agent.params.belief, cfg.belief_lr)
    if update_actor_critic:
        agent.params.critic.zero_grad()
        ad.backward(losses.critic)
        report.grad_norm_critic = agent.params.critic.grad_norm()
        adam_update(agent.params.critic, cfg.critic_lr)
        agent.params.actor.zero_grad()
        ad.backward(losses.policy)
        report.grad_norm_actor = agent.params.actor.grad_norm()
        adam_update(agent.params.actor, cfg.actor_lr)
        target_sync(agent.params, step, cfg.target_period)
    return report


# ---------------------------------------------------------------------------
# collection


def default_task_info(env, task, t: int, obs: np.ndarray) -> np.ndarray:
    """Default belief supervision target: the task description vector."""
    return env.task_description(task)


class Collector:
    """Streams steps from one environment, pushing finished episodes to
    replay as length-U unrolls with the acting-time RNN states."""

    def __init__(self, env, agent: Agent, rng: np.random.Generator,
                 replay: ReplayBuffer, unroll_length: int, split: str = "train",
                 task_info_fn=None, act_mode: str = "sample"):
        self.env = env
        self.agent = agent
        self.rng = rng
        self.replay = replay
        self.unroll_length = unroll_length
        self.split = split
        self.task_info_fn = task_info_fn or default_task_info
        self.act_mode = act_mode
        self.episode_id = -1
        self.episode_returns: list[float] = []
        self._begin_episode()

    def _begin_episode(self) -> None:
        self.episode_id += 1
        self.task = self.env.sample_task(self.rng, self.split)
        self.state, self.obs = self.env.reset(self.task, self.rng)
        self.carry = self.agent.initial_carry()
        self._obs_list = [self.obs]
        self._actions, self._rewards, self._logps, self._infos = [], [], [], []
        self._states = {"actor": [], "critic": [], "belief": []}
        self._return = 0.0

    def step(self) -> tuple[float, bool]:
        for role in ("actor", "critic", "belief"):
            self._states[role].append(self.carry.get(role))
        t = len(self._rewards)
        self._infos.append(self.task_info_fn(self.env, self.task, t, self.obs))
        action, logp, self.carry, _ = self.agent.act(self.obs, self.carry, self.rng,
                                                     mode=self.act_mode)
        self.state, self.obs, reward, done = self.env.step(self.state, action,
                                                           self.task, self.rng)
        self._obs_list.append(self.obs)
        self._actions.append(action)
        self._rewards.append(reward)
        self._logps.append(logp)
        self._return += reward
        if done:
            self._flush_episode()
            self._begin_episode()
        return reward, done

    def state_dict(self) -> dict:
        """Everything needed to resume mid-episode (for exact checkpoint resume)."""
        def copy_carry(carry):
            return {k: (None if v is None else (v[0].copy(), v[1].copy()))
                    for k, v in carry.items()}

        return {
            "episode_id": self.episode_id,
            "task": self.task,
            "env_state": self.state,
            "obs": self.obs.copy(),
            "carry": copy_carry(self.carry),
            "obs_list": [o.copy() for o in self._obs_list],
            "actions": list(self._actions),
            "rewards": list(self._rewards),
            "logps": list(self._logps),
            "infos": list(self._infos),
            "states": {k: list(v) for k, v in self._states.items()},
            "return": self._return,
            "episode_returns": list(self.episode_returns),
        }

    def load_state_dict(self, state: dict) -> None:
        self.episode_id = state["episode_id"]
        self.task = state["task"]
        self.state = state["env_state"]
        self.obs = state["obs"]
        self.carry = state["carry"]
        self._obs_list = list(state["obs_list"])
        self._actions = list(state["actions"])
        self._rewards = list(state["rewards"])
        self._logps = list(state["logps"])
        self._infos = list(state["infos"])
        self._states = {k: list(v) for k, v in state["states"].items()}
        self._return = state["return"]
        self.episode_returns = list(state["episode_returns"])

    def _flush_episode(self) -> None:
        entries = segment_episode(
            observations=np.asarray(self._obs_list),
            actions=np.asarray(self._actions, dtype=np.float64),
            rewards=np.asarray(self._rewards, dtype=np.float64),
            behavior_log_probs=np.asarray(self._logps, dtype=np.float64),
            task_info=np.asarray(self._infos, dtype=np.float64),
            states=self._states,
            unroll_length=self.unroll_length,
            episode_id=self.episode_id,
        )
        for e in entries:
            self.replay.push(e)
        self.episode_returns.append(self._return)


def single_threaded_loop(env, agent: Agent, cfg: LearnerConfig,
                         rng: np.random.Generator, n_iterations: int,
                         replay: ReplayBuffer | None = None,
                         on_iteration=None, start_step: int = 0,
                         collector: Collector | None = None) -> ReplayBuffer:
    """Appendix-style single-process training: collect one unroll's worth of
    steps, then n_train_iters actor/critic updates and one belief update,
    using TD(0) targets. Deterministic given the rng."""
    replay = replay if replay is not None else ReplayBuffer()
    if collector is None:
        collector = Collector(env, agent, rng, replay, cfg.unroll_length)
    step = start_step
    for it in range(n_iterations):
        for _ in range(cfg.unroll_length):
            collector.step()
        report = None
        if len(replay) > 0:
            for _ in range(cfg.n_train_iters):
                batch = stack_batch(replay.sample_uniform(cfg.batch_size, rng))
                step += 1
                report = svg0_update(batch, agent, cfg, rng, step,
                                     update_belief=False)
            batch = stack_batch(replay.sample_uniform(cfg.batch_size, rng))
            belief_report = svg0_update(batch, agent, cfg, rng, step,
                                        update_actor_critic=False)
            if report is not None:
                report.belief_nll = belief_report.belief_nll
                report.ib_kl_belief = belief_report.ib_kl_belief
                report.grad_norm_belief = belief_report.grad_norm_belief
        if on_iteration is not None:
            on_iteration(it, step, collector, report)
    return replay


# ---------------------------------------------------------------------------
# PPO


@dataclass
class Rollout:
    obs: np.ndarray  # (N, T+1, D)
    actions: np.ndarray  # (N, T, A) or (N, T)
    rewards: np.ndarray  # (N, T)
    dones: np.ndarray  # (N, T)
    log_probs: np.ndarray  # (N, T)
    values: np.ndarray  # (N, T)
    task_info: np.ndarray  # (N, T, d)

    @property
    def n_steps(self) -> int:
        return self.rewards.size


def collect_rollout(env, agent: Agent, rng: np.random.Generator, n_episodes: int,
                    split: str = "train", task_info_fn=None) -> Rollout:
    """Run complete on-policy episodes, recording log-probs and values."""
    task_info_fn = task_info_fn or default_task_info
    obs_eps, act_eps, rew_eps, logp_eps, val_eps, info_eps = [], [], [], [], [], []
    for _ in range(n_episodes):
        task = env.sample_task(rng, split)
        state, obs = env.reset(task, rng)
        carry = agent.initial_carry()
        o, a, r, lp, v, inf = [obs], [], [], [], [], []
        done = False
        t = 0
        while not done:
            inf.append(task_info_fn(env, task, t, obs))
            action, logp, carry, info = agent.act(obs, carry, rng)
            state, obs, reward, done = env.step(state, action, task, rng)
            o.append(obs)
            a.append(action)
            r.append(reward)
            lp.append(logp)
            v.append(info["value"])
            t += 1
        obs_eps.append(o)
        act_eps.append(a)
        rew_eps.append(r)
        logp_eps.append(lp)
        val_eps.append(v)
        info_eps.append(inf)
    dones = np.zeros((n_episodes, len(rew_eps[0])))
    dones[:, -1] = 1.0
    info = np.asarray(info_eps, dtype=np.float64)
    if info.ndim == 2:
        info = info[:, :, None]
    return Rollout(
        obs=np.asarray(obs_eps, dtype=np.float64),
        actions=np.asarray(act_eps, dtype=np.float64),
        rewards=np.asarray(rew_eps, dtype=np.float64),
        dones=dones,
        log_probs=np.asarray(logp_eps, dtype=np.float64),
        values=np.asarray(val_eps, dtype=np.float64),
        task_info=info,
    )


def gae_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                   gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimation over (N, T) episode-major arrays.

    Bootstraps with the next stored value within the episode; a done flag
    cuts both the bootstrap and the recursion.
    """
    N, T = rewards.shape
    not_done = 1.0 - dones
    v_next = np.concatenate([values[:, 1:], np.zeros((N, 1))], axis=1)
    delta = rewards + gamma * not_done * v_next - values
    adv = np.zeros((N, T))
    acc = np.zeros(N)
    for t in range(T - 1, -1, -1):
        acc = delta[:, t] + gamma * lam * not_done[:, t] * acc
        adv[:, t] = acc
    return adv


def ppo_losses(rollout: Rollout, agent: Agent, cfg: LearnerConfig,
               rng: np.random.Generator, adv_norm: np.ndarray,
               returns: np.ndarray) -> SvgLosses:
    """One epoch's clipped-surrogate, value, and belief loss graphs."""
    spec = agent.spec
    N, T = rollout.rewards.shape
    valid = np.ones((N, T))
    obs_rows = [Tensor(rollout.obs[:, t]) for t in range(T)]

    feats: list[Tensor | None] = [None] * T
    belief_dists, belief_kls = [], []
    if agent.belief_net is not None:
        bstate = agent.belief_net.initial_state(N)
        for t in range(T):
            z, dist, kl, bstate = agent.belief_net.step(obs_rows[t], bstate, rng,
                                                        sample_ib=True)
            feats[t] = z
            belief_dists.append(dist)
            belief_kls.append(kl)

    def joined(t: int, with_features: bool) -> Tensor:
        if feats[t] is None or not with_features:
            return obs_rows[t]
        return ad.concat([obs_rows[t], ad.stop_gradient(feats[t])], axis=-1)

    # --- policy ---
    astate = agent.actor_net.initial_state(N)
    policy_obj_terms, entropy_terms, actor_kls, actor_aux = [], [], [], []
    for t in range(T):
        dist, trunk, kl, astate = agent.actor_net.step(joined(t, True), astate,
                                                       rng, sample_ib=True)
        logp_new = dist.log_prob(rollout.actions[:, t])
        ratio = ad.exp(logp_new - Tensor(rollout.log_probs[:, t]))
        a_t = Tensor(adv_norm[:, t])
        unclipped = ratio * a_t
        clipped = ad.clip(ratio, 1.0 - cfg.ppo_clip, 1.0 + cfg.ppo_clip) * a_t
        policy_obj_terms.append(ad.minimum(unclipped, clipped))
        entropy_terms.append(dist.entropy())
        actor_kls.append(kl)
        if agent.actor_aux_head is not None:
            actor_aux.append(agent.actor_aux_head(trunk))
    entropy_mean = _masked_mean(entropy_terms, valid)
    actor_kl_mean = _masked_mean(actor_kls, valid)
    policy_loss = (0.0 - _masked_mean(policy_obj_terms, valid)
                   - cfg.entropy_coeff * entropy_mean
                   + spec.actor.ib_coeff * actor_kl_mean)
    actor_aux_nll = 0.0
    if actor_aux:
        nll = _masked_mean([0.0 - belief_log_prob(actor_aux[t], rollout.task_info[:, t])
                            for t in range(T)], valid)
        actor_aux_nll = float(nll.data)
        policy_loss = policy_loss + spec.aux_belief_weight * nll

    # --- value ---
    cstate = agent.critic_net.initial_state(N)
    value_terms, critic_kls, critic_aux = [], [], []
    for t in range(T):
        v, trunk, kl, cstate = agent.critic_net.step(
            joined(t, spec.critic_uses_belief_features), None, cstate, rng,
            sample_ib=True)
        value_terms.append(ad.square(v - Tensor(returns[:, t])))
        critic_kls.append(kl)
        if agent.critic_aux_head is not None:
            critic_aux.append(agent.critic_aux_head(trunk))
    critic_kl_mean = _masked_mean(critic_kls, valid)
    value_loss = _masked_mean(value_terms, valid) + spec.critic.ib_coeff * critic_kl_mean
    critic_aux_nll = 0.0
    if critic_aux:
        nll = _masked_mean([0.0 - belief_log_prob(critic_aux[t], rollout.task_info[:, t])
                            for t in range(T)], valid)
        critic_aux_nll = float(nll.data)
        value_loss = value_loss + spec.aux_belief_weight * nll

    # --- belief ---
    b_loss = None
    nll_val = kl_val = math.nan
    if belief_dists:
        b_loss, nll_val, kl_val = belief_loss(belief_dists, rollout.task_info,
                                              valid, belief_kls,
                                              spec.belief.ib_coeff)
    elif actor_aux or critic_aux:
        nll_val = 0.5 * (actor_aux_nll + critic_aux_nll)

    report = LossReport(
        policy_loss=float(policy_loss.data), critic_loss=float(value_loss.data),
        belief_nll=nll_val, ib_kl_actor=float(actor_kl_mean.data),
        ib_kl_critic=float(critic_kl_mean.data),
        ib_kl_belief=kl_val if belief_dists else 0.0,
        entropy=float(entropy_mean.data))
    return SvgLosses(policy=policy_loss, critic=value_loss, belief=b_loss,
                     report=report)


def ppo_update(rollout: Rollout, agent: Agent, cfg: LearnerConfig,
               rng: np.random.Generator) -> LossReport:
    """PPO with a clipped surrogate; the value and belief networks take the
    same number of (unclipped) gradient steps as the policy.

    cfg.ppo_epochs counts full-batch gradient steps; belief features are
    recomputed from the current belief parameters every epoch.
    """
    advantages = gae_advantages(rollout.rewards, rollout.values, rollout.dones,
                                cfg.discount, cfg.gae_lambda)
    returns = advantages + rollout.values
    adv_norm = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    report = LossReport()
    for _ in range(cfg.ppo_epochs):
        losses = ppo_losses(rollout, agent, cfg, rng, adv_norm, returns)
        report = losses.report
        if not report.finite():
            raise RuntimeError(f"non-finite loss in ppo_update: {report.to_dict()}")

        agent.params.actor.zero_grad()
        ad.backward(losses.policy)
        report.grad_norm_actor = agent.params.actor.grad_norm()
        adam_update(agent.params.actor, cfg.actor_lr)
        agent.params.critic.zero_grad()
        ad.backward(losses.critic)
        report.grad_norm_critic = agent.params.critic.grad_norm()
        adam_update(agent.params.critic, cfg.critic_lr)
        if losses.belief is not None and agent.params.belief is not None:
            agent.params.belief.zero_grad()
            ad.backward(losses.belief)
            report.grad_norm_belief = agent.params.belief.grad_norm()
            adam_update(agent.params.belief, cfg.belief_lr)
    return report
