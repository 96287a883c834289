"""The three agent architectures: baseline LSTM, belief network, auxiliary head.

Wiring rules:
  * belief architecture — a separate belief network consumes observations;
    its penultimate representation (post-LSTM, or the sampled IB latent when
    IB is on) is concatenated onto actor and critic inputs through a
    stop-gradient, so no actor/critic loss ever reaches the belief weights.
  * auxhead architecture — belief heads branch off the actor and critic
    trunks (post-LSTM) and DO propagate gradients into them.
  * baseline — no belief path at all.

The critic receives the action squashed with tanh, concatenated after the
observation encoder and before its LSTM; its Q evaluator closes over the
recurrent state so Q(a) can be probed at arbitrary actions while the carried
state advances only with the actions actually taken.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn
from .nn import ParameterSet, Tensor, adam_update
from .nn import autodiff as ad
from .nn.heads import (
    BetaHead,
    BinnedDensityHead,
    CategoricalHead,
    DiagGaussianPolicyHead,
    FactoredCategoricalHead,
    GaussianHead,
    ScalarHead,
)
from .nn.layers import IBLayer, LSTM, MLP, MLPEncoder

ARCHITECTURES = ("baseline", "belief", "auxhead")
TARGET_KINDS = ("task-description", "expert-action", "task-id", "task-embedding")


@dataclass(frozen=True)
class NetConfig:
    """Per-network sizing: encoder widths, optional LSTM, optional IB layer."""

    encoder: tuple[int, ...] = (64,)
    lstm: int | None = 64
    ib_dim: int | None = None
    ib_coeff: float = 0.0
    ib_fixed_std: float | None = None
    ib_sample_at_act: bool = True
    layer_norm: bool = True
    head_hidden: tuple[int, ...] = ()  # belief net only: head MLP widths


@dataclass(frozen=True)
class AgentSpec:
    architecture: str
    obs_dim: int
    action_kind: str  # "continuous" | "discrete"
    action_dim: int  # dimensions (continuous) or arity (discrete)
    actor: NetConfig = field(default_factory=NetConfig)
    critic: NetConfig = field(default_factory=NetConfig)
    belief: NetConfig | None = None
    belief_head: dict | None = None  # {"kind": ..., ...} matching the target
    target_kind: str = "task-description"
    critic_takes_action: bool = True  # False for PPO value networks
    critic_uses_belief_features: bool = True  # False for the bandit PPO variant
    aux_belief_weight: float = 1.0

    def validate(self) -> list[str]:
        problems = []
        if self.architecture not in ARCHITECTURES:
            problems.append(f"unknown architecture {self.architecture!r}")
        if self.action_kind not in ("continuous", "discrete"):
            problems.append(f"unknown action kind {self.action_kind!r}")
        if self.obs_dim < 1 or self.action_dim < 1:
            problems.append("obs_dim and action_dim must be positive")
        if self.target_kind not in TARGET_KINDS:
            problems.append(f"unknown supervision target kind {self.target_kind!r}")
        if self.architecture == "belief" and self.belief is None:
            problems.append("belief architecture requires a belief NetConfig")
        if self.architecture != "belief" and self.belief is not None:
            problems.append(f"{self.architecture} architecture must not carry a "
                            "belief NetConfig")
        if self.architecture != "baseline" and self.belief_head is None:
            problems.append(f"{self.architecture} architecture requires belief_head")
        if self.architecture == "baseline" and self.belief_head is not None:
            problems.append("baseline architecture must not carry belief_head")
        return problems

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AgentSpec":
        d = dict(d)
        for key in ("actor", "critic", "belief"):
            if d.get(key) is not None:
                cfg = dict(d[key])
                cfg["encoder"] = tuple(cfg["encoder"])
                cfg["head_hidden"] = tuple(cfg["head_hidden"])
                d[key] = NetConfig(**cfg)
        return cls(**d)


def action_input(spec: AgentSpec, actions: np.ndarray) -> np.ndarray:
    """Actions as critic-input rows: raw for continuous, one-hot for discrete."""
    actions = np.asarray(actions)
    if spec.action_kind == "continuous":
        return actions.reshape(-1, spec.action_dim).astype(np.float64)
    idx = actions.reshape(-1).astype(np.int64)
    out = np.zeros((len(idx), spec.action_dim))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def build_belief_head(pset: ParameterSet, prefix: str, in_dim: int, head_spec: dict,
                      rng: np.random.Generator):
    kind = head_spec["kind"]
    if kind == "beta":
        return BetaHead(pset, prefix, in_dim, head_spec["dim"], rng)
    if kind == "gaussian":
        return GaussianHead(pset, prefix, in_dim, head_spec["dim"], rng)
    if kind == "binned":
        return BinnedDensityHead(pset, prefix, in_dim, head_spec["n_bins"],
                                 head_spec["lo"], head_spec["hi"], rng)
    if kind == "factored":
        return FactoredCategoricalHead(pset, prefix, in_dim, head_spec["k"],
                                       head_spec["c"], rng)
    if kind == "categorical":
        return CategoricalHead(pset, prefix, in_dim, head_spec["n"], rng)
    raise ValueError(f"unknown belief head kind {kind!r}")


class _Trunk:
    """Shared encoder -> (optional LSTM) -> (optional IB) pipeline."""

    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, cfg: NetConfig,
                 rng: np.random.Generator, extra_after_encoder: int = 0):
        self.cfg = cfg
        self.encoder = MLPEncoder(pset, f"{prefix}.enc", in_dim, cfg.encoder, rng,
                                  layer_norm=cfg.layer_norm)
        d = self.encoder.out_dim + extra_after_encoder
        self.lstm = LSTM(pset, f"{prefix}.lstm", d, cfg.lstm, rng) if cfg.lstm else None
        if self.lstm:
            d = cfg.lstm
        self.trunk_dim = d  # post-LSTM width: the auxiliary heads' tap point
        self.ib = (IBLayer(pset, f"{prefix}.ib", d, cfg.ib_dim, rng,
                           kl_coeff=cfg.ib_coeff, fixed_std=cfg.ib_fixed_std,
                           sample_at_act=cfg.ib_sample_at_act)
                   if cfg.ib_dim else None)
        self.out_dim = cfg.ib_dim if self.ib else d

    def initial_state(self, batch: int):
        return self.lstm.initial_state(batch) if self.lstm else None

    def run(self, x: Tensor, extra: Tensor | None, state, rng, sample_ib: bool):
        """-> (output, trunk (post-LSTM), kl (B,), new_state)."""
        y = self.encoder(x)
        if extra is not None:
            y = ad.concat([y, extra], axis=-1)
        if self.lstm is not None:
            y, state = self.lstm.step(y, state)
        trunk = y
        if self.ib is not None:
            y, kl = self.ib(y, rng, sample=sample_ib)
        else:
            kl = Tensor(np.zeros(y.shape[0]))
        return y, trunk, kl, state


class ActorNetwork:
    def __init__(self, pset: ParameterSet, spec: AgentSpec, feat_dim: int,
                 rng: np.random.Generator):
        self.trunk = _Trunk(pset, "actor", spec.obs_dim + feat_dim, spec.actor, rng)
        if spec.action_kind == "continuous":
            self.head = DiagGaussianPolicyHead(pset, "actor.head", self.trunk.out_dim,
                                               spec.action_dim, rng)
        else:
            self.head = CategoricalHead(pset, "actor.head", self.trunk.out_dim,
                                        spec.action_dim, rng)

    def initial_state(self, batch: int):
        return self.trunk.initial_state(batch)

    def step(self, obs_feat: Tensor, state, rng, sample_ib: bool = True):
        """-> (policy distribution, trunk, kl, new_state)."""
        z, trunk, kl, state = self.trunk.run(obs_feat, None, state, rng, sample_ib)
        return self.head(z), trunk, kl, state


class CriticNetwork:
    """Q network (action concatenated post-encoder) or V network (no action)."""

    def __init__(self, pset: ParameterSet, spec: AgentSpec, feat_dim: int,
                 rng: np.random.Generator):
        self.takes_action = spec.critic_takes_action
        extra = spec.action_dim if self.takes_action else 0
        self.trunk = _Trunk(pset, "critic", spec.obs_dim + feat_dim, spec.critic, rng,
                            extra_after_encoder=extra)
        self.head = ScalarHead(pset, "critic.head", self.trunk.out_dim, rng)

    def initial_state(self, batch: int):
        return self.trunk.initial_state(batch)

    def step(self, obs_feat: Tensor, action: Tensor | None, state, rng,
             sample_ib: bool = True):
        """-> (value (B,), trunk, kl (B,), new_state).

        The returned state reflects *this* action; when probing counterfactual
        actions the caller keeps carrying the taken-action state instead.
        """
        extra = None
        if self.takes_action:
            if action is None:
                raise ValueError("critic requires an action input")
            extra = ad.tanh(action)
        z, trunk, kl, state = self.trunk.run(obs_feat, extra, state, rng, sample_ib)
        return self.head(z), trunk, kl, state


class BeliefNetwork:
    def __init__(self, pset: ParameterSet, spec: AgentSpec, rng: np.random.Generator):
        cfg = spec.belief
        self.trunk = _Trunk(pset, "belief", spec.obs_dim, cfg, rng)
        self.feature_dim = self.trunk.out_dim
        self.head_mlp = (MLP(pset, "belief.headmlp", self.feature_dim,
                             cfg.head_hidden, rng) if cfg.head_hidden else None)
        head_in = self.head_mlp.out_dim if self.head_mlp else self.feature_dim
        self.head = build_belief_head(pset, "belief.head", head_in, spec.belief_head, rng)

    def initial_state(self, batch: int):
        return self.trunk.initial_state(batch)

    def step(self, obs: Tensor, state, rng, sample_ib: bool = True):
        """-> (features, belief distribution, kl, new_state)."""
        z, _, kl, state = self.trunk.run(obs, None, state, rng, sample_ib)
        h = self.head_mlp(z) if self.head_mlp else z
        return z, self.head(h), kl, state


@dataclass
class AgentParams:
    actor: ParameterSet
    critic: ParameterSet
    belief: ParameterSet | None
    actor_target: ParameterSet
    critic_target: ParameterSet

    def state_dict(self) -> dict:
        out = {}
        for role in ("actor", "critic", "belief", "actor_target", "critic_target"):
            pset = getattr(self, role)
            out[role] = None if pset is None else pset.state_dict()
        return out

    def load_state_dict(self, state: dict) -> None:
        for role, sub in state.items():
            pset = getattr(self, role)
            if sub is None or pset is None:
                if (sub is None) != (pset is None):
                    raise ValueError(f"checkpoint/param mismatch for {role}")
                continue
            pset.load_state_dict(sub)


class Agent:
    """Networks + parameters for one AgentSpec, online and target copies."""

    def __init__(self, spec: AgentSpec, seed: int):
        problems = spec.validate()
        if problems:
            raise ValueError("invalid AgentSpec: " + "; ".join(problems))
        self.spec = spec
        rng = np.random.default_rng(seed)

        belief_pset = None
        self.belief_net = None
        feat_dim = 0
        if spec.architecture == "belief":
            belief_pset = ParameterSet()
            self.belief_net = BeliefNetwork(belief_pset, spec, rng)
            feat_dim = self.belief_net.feature_dim
        self.feature_dim = feat_dim

        actor_pset, critic_pset = ParameterSet(), ParameterSet()
        critic_feat = feat_dim if spec.critic_uses_belief_features else 0
        self.actor_net = ActorNetwork(actor_pset, spec, feat_dim, rng)
        self.critic_net = CriticNetwork(critic_pset, spec, critic_feat, rng)

        self.actor_aux_head = self.critic_aux_head = None
        if spec.architecture == "auxhead":
            self.actor_aux_head = build_belief_head(
                actor_pset, "actor.aux", self.actor_net.trunk.trunk_dim,
                spec.belief_head, rng)
            self.critic_aux_head = build_belief_head(
                critic_pset, "critic.aux", self.critic_net.trunk.trunk_dim,
                spec.belief_head, rng)

        # Target copies share structure; values synced from online at build.
        tgt_rng = np.random.default_rng(seed)
        actor_t_pset, critic_t_pset = ParameterSet(), ParameterSet()
        self.actor_target_net = ActorNetwork(actor_t_pset, spec, feat_dim, tgt_rng)
        self.critic_target_net = CriticNetwork(critic_t_pset, spec, critic_feat, tgt_rng)
        if spec.architecture == "auxhead":
            build_belief_head(actor_t_pset, "actor.aux",
                              self.actor_target_net.trunk.trunk_dim, spec.belief_head,
                              tgt_rng)
            build_belief_head(critic_t_pset, "critic.aux",
                              self.critic_target_net.trunk.trunk_dim, spec.belief_head,
                              tgt_rng)
        actor_t_pset.copy_values_from(actor_pset)
        critic_t_pset.copy_values_from(critic_pset)
        # Targets are never optimized; keeping them grad-free means policy
        # losses probing the target critic touch only the action path.
        actor_t_pset.set_requires_grad(False)
        critic_t_pset.set_requires_grad(False)

        self.params = AgentParams(actor=actor_pset, critic=critic_pset,
                                  belief=belief_pset, actor_target=actor_t_pset,
                                  critic_target=critic_t_pset)

    # -- acting ------------------------------------------------------------

    def initial_carry(self) -> dict:
        def state_of(net):
            s = net.initial_state(1)
            return None if s is None else (s[0].data.copy(), s[1].data.copy())

        carry = {"actor": state_of(self.actor_net),
                 "critic": state_of(self.critic_net)}
        if self.belief_net is not None:
            carry["belief"] = state_of(self.belief_net)
        else:
            carry["belief"] = None
        return carry

    def act(self, obs: np.ndarray, carry: dict, rng: np.random.Generator,
            mode: str = "sample") -> tuple[np.ndarray | int, float, dict, dict]:
        """One acting step (batch 1) without gradients.

        Returns (action, behavior log-prob, new carry, info). `info` carries
        the belief distribution (for dumps) and the belief features.
        """
        def as_state(pair):
            return None if pair is None else (Tensor(pair[0]), Tensor(pair[1]))

        def from_state(state):
            return None if state is None else (state[0].data.copy(), state[1].data.copy())

        with ad.no_grad():
            x = Tensor(obs.reshape(1, -1))
            info: dict = {}
            new_carry = dict(carry)
            feat = None
            if self.belief_net is not None:
                cfg = self.spec.belief
                z, dist, _, bstate = self.belief_net.step(
                    x, as_state(carry["belief"]), rng,
                    sample_ib=cfg.ib_sample_at_act if mode == "sample" else False)
                feat = z
                new_carry["belief"] = from_state(bstate)
                info["belief_dist"] = dist
                info["belief_features"] = z.data[0].copy()

            actor_in = x if feat is None else ad.concat([x, feat], axis=-1)
            sample_ib = mode == "sample" and self.spec.actor.ib_sample_at_act
            dist, trunk, _, astate = self.actor_net.step(
                actor_in, as_state(carry["actor"]), rng, sample_ib=sample_ib)
            new_carry["actor"] = from_state(astate)
            if self.actor_aux_head is not None:
                info["belief_dist"] = self.actor_aux_head(trunk)

            if mode == "sample":
                action = dist.sample(rng)
            else:
                action = dist.mode()
            log_prob = float(dist.log_prob(action).data[0])
            action = action[0] if self.spec.action_kind == "continuous" else int(action[0])

            critic_in = x
            if self.spec.critic_uses_belief_features and feat is not None:
                critic_in = ad.concat([x, feat], axis=-1)
            act_t = None
            if self.critic_net.takes_action:
                act_t = Tensor(action_input(self.spec, np.asarray(action)))
            value, _, _, cstate = self.critic_net.step(
                critic_in, act_t, as_state(carry["critic"]), rng, sample_ib=False)
            new_carry["critic"] = from_state(cstate)
            info["value"] = float(value.data[0])
        return action, log_prob, new_carry, info

    # -- checkpointing -----------------------------------------------------

    def state_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "params": self.params.state_dict()}

    def load_state_dict(self, state: dict) -> None:
        if AgentSpec.from_dict(state["spec"]) != self.spec:
            raise ValueError("checkpoint spec does not match agent spec")
        self.params.load_state_dict(state["params"])


def target_sync(params: AgentParams, step: int, period: int) -> AgentParams:
    """Hard-copy online -> target when step is a sync step (step % period == 0)."""
    if step % period == 0:
        params.actor_target.copy_values_from(params.actor)
        params.critic_target.copy_values_from(params.critic)
    return params


# ---------------------------------------------------------------------------
# Task-embedding pretraining


def pretrain_task_embedding(env, tasks: list, rng: np.random.Generator,
                            embed_dim: int = 16, mlp_width: int = 32,
                            episodes: int = 300, learning_rate: float = 1e-2
                            ) -> tuple[np.ndarray, float]:
    """Train a multitask policy with an observed one-hot task ID and return
    each task's IB-layer mean activations as its embedding column.

    The task ID passes through a 2-layer MLP and a stochastic IB layer; the
    sampled latent is concatenated onto the observation for a feedforward
    policy trained with REINFORCE against a per-task baseline. Returns
    (table of shape (n_tasks, embed_dim), mean return over the last 10% of
    episodes — callers may flag the table low-quality if it shows no
    improvement).
    """
    n_tasks = len(tasks)
    pset = ParameterSet()
    embed_mlp = MLP(pset, "embed", n_tasks, (mlp_width, mlp_width), rng)
    ib = IBLayer(pset, "ib", mlp_width, embed_dim, rng, kl_coeff=0.0)
    obs_dim = env.reset(tasks[0], np.random.default_rng(0))[1].shape[0]
    encoder = MLPEncoder(pset, "enc", obs_dim + embed_dim, (32,), rng, layer_norm=False)
    if env.action_kind == "continuous":
        head = DiagGaussianPolicyHead(pset, "head", encoder.out_dim, env.action_dim, rng)
    else:
        head = CategoricalHead(pset, "head", encoder.out_dim, env.n_actions, rng)

    baselines = np.zeros(n_tasks)
    counts = np.zeros(n_tasks)
    returns = []
    for ep in range(episodes):
        ti = int(rng.integers(n_tasks))
        task = tasks[ti]
        onehot = np.zeros(n_tasks)
        onehot[ti] = 1.0
        state, obs = env.reset(task, rng)
        log_probs, total = [], 0.0
        done = False
        while not done:
            z, _ = ib(embed_mlp(Tensor(onehot.reshape(1, -1))), rng, sample=True)
            feat = encoder(ad.concat([Tensor(obs.reshape(1, -1)), z], axis=-1))
            dist = head(feat)
            action = dist.sample(rng)
            log_probs.append(dist.log_prob(action))
            a = action[0] if env.action_kind == "continuous" else int(action[0])
            state, obs, r, done = env.step(state, a, task, rng)
            total += r
        counts[ti] += 1
        baselines[ti] += (total - baselines[ti]) / counts[ti]
        advantage = total - baselines[ti]
        loss = (-advantage / max(len(log_probs), 1)) * ad.sum(
            ad.concat([ad.reshape(lp, (1,)) for lp in log_probs], axis=0))
        pset.zero_grad()
        ad.backward(loss)
        adam_update(pset, learning_rate)
        returns.append(total)

    table = np.zeros((n_tasks, embed_dim))
    with ad.no_grad():
        for ti in range(n_tasks):
            onehot = np.zeros((1, n_tasks))
            onehot[0, ti] = 1.0
            z, _ = ib(embed_mlp(Tensor(onehot)), None, sample=False)
            table[ti] = z.data[0]
    tail = max(1, len(returns) // 10)
    return table, float(np.mean(returns[-tail:]))
