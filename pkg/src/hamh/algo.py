"""HAMH-PPO: rollouts, GAE, the clipped actor objective with hyper-action
entropy, the multi-head TD critic loss, and the training loop.

A :class:`Learner` owns one actor/critic pair and the agents it controls.
The shared method uses a single learner for every intersection; the
non-shared baseline uses one learner per intersection.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import Config
from .nets import Actor, Critic, entropy, joint_value
from .nn import AdamState, F, Tensor, adam_step, backward, clip_grad_norm, get_tape, no_grad
from .rng import substream


@dataclass
class TrajectoryBuffer:
    """One episode for N agents over T decision steps.

    ``obs`` and the value arrays carry T + 1 rows: the last row is the
    bootstrap state after the final action.
    """

    obs: np.ndarray  # (T + 1, N, obs_dim)
    hidden: np.ndarray  # (T, N, H) hidden state fed into step t
    actions: np.ndarray  # (T, N)
    logp: np.ndarray  # (T, N) behaviour log-probabilities
    w: np.ndarray  # (T + 1, N, k)
    z: np.ndarray  # (T + 1, N, k)
    values: np.ndarray  # (T + 1, N) joint values z . w
    rewards: np.ndarray  # (T, N) raw rewards
    m_tt: float = float("nan")

    @property
    def T(self) -> int:
        return self.actions.shape[0]

    @property
    def N(self) -> int:
        return self.actions.shape[1]


@dataclass
class AdvantageSet:
    advantages: np.ndarray  # (T, N)
    targets: np.ndarray  # (T, N) advantage + value


def compute_gae(rewards, values, gamma: float, lam: float) -> AdvantageSet:
    """GAE by backward recursion; the episode end bootstraps (time limit)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards, values = rewards[:, None], values[:, None]
    if values.shape != (rewards.shape[0] + 1,) + rewards.shape[1:]:
        raise ValueError(f"values need T + 1 rows: rewards {rewards.shape}, values {values.shape}")
    adv = kernels.gae(rewards, values, float(gamma), float(lam))
    targets = adv + values[:-1]
    if squeeze:
        adv, targets = adv[:, 0], targets[:, 0]
    return AdvantageSet(adv, targets)


def normalize(adv: np.ndarray) -> np.ndarray:
    std = adv.std()
    return (adv - adv.mean()) / (std if std > 1e-12 else 1.0)


def ppo_clip_term(logp_new, logp_old, advantage, eps: float) -> Tensor:
    """min(rho * A, clip(rho, 1 - eps, 1 + eps) * A) elementwise."""
    logp_new = F.as_tensor(logp_new)
    adv = Tensor(np.asarray(advantage, dtype=np.float64))
    ratio = F.exp(logp_new - Tensor(np.asarray(logp_old, dtype=np.float64)))
    return F.minimum(ratio * adv, F.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def sample_actions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1])[..., None]
    return np.minimum((u >= cdf).sum(axis=-1), probs.shape[-1] - 1)


@dataclass
class LossTerms:
    objective: Tensor  # actor objective J, maximized
    critic: Tensor  # TD loss, minimized
    ppo: float
    entropy: float
    bootstrap: np.ndarray | None = None


class Learner:
    """Actor/critic pair controlling ``agents`` (indices into the network)."""

    def __init__(self, agents, n_total: int, G: np.ndarray, config: Config, seed: int = 0, name: str = ""):
        self.agents = np.asarray(agents, dtype=np.int64)
        self.local = np.arange(len(self.agents))
        self.n_total = n_total
        self.G = np.asarray(G)
        # critic input: own intersections plus their graph neighbours
        A = (self.G != 0) | np.eye(len(self.G), dtype=bool)
        self.view = np.flatnonzero(A[self.agents].any(axis=0))
        self.view_G = self.G[np.ix_(self.view, self.view)]
        self.view_rows = np.searchsorted(self.view, self.agents)
        self.config = config
        prefix = f"{name}." if name else ""
        self.actor = Actor(
            n_agents=len(self.agents),
            k=config.k,
            seed=seed,
            hidden=config.hidden,
            use_hyper=config.use_hyper,
            stream=f"{prefix}actor",
        )
        self.critic = Critic(
            self.actor.embed,
            k=config.k,
            seed=seed,
            hidden=config.hidden,
            heads=config.gat_heads,
            layers=config.gat_layers,
            readout=config.gat_readout,
            stream=f"{prefix}critic",
        )
        self.actor_params = self.actor.parameters(f"{prefix}actor")
        self.critic_params = self.critic.parameters(f"{prefix}critic")
        self.actor_opt = AdamState()
        self.critic_opt = AdamState()

    @property
    def shared(self) -> bool:
        return len(self.agents) == self.n_total

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self.actor_params)
        out.update(self.critic_params)
        return out

    # ------------------------------------------------------------ rollout

    def act(self, obs_all: np.ndarray, h: np.ndarray):
        return self.actor.step(obs_all[self.agents], h, self.local)

    def values(self, obs_seq: np.ndarray) -> np.ndarray:
        with no_grad():
            Z = self.critic.values(obs_seq[..., self.view, :], self.view_G).data
        return Z[..., self.view_rows, :]

    # ------------------------------------------------------------ losses

    def losses(self, buf: TrajectoryBuffer, adv: np.ndarray, bootstrap: np.ndarray | None = None) -> LossTerms:
        """Actor objective and critic loss on this learner's slice of ``buf``.

        ``adv`` is (T, n) for this learner's agents, already normalized if
        requested; it carries no gradient. ``bootstrap`` (T, n) replaces the
        stop-gradient V(t+1) with fixed values, which is what a
        finite-difference check of the semi-gradient must hold constant.
        """
        cfg = self.config
        T = buf.T
        a_idx = self.agents
        own_obs = buf.obs[:, a_idx]
        x = self.actor.embed(own_obs)
        hs = self.actor.gru_sequence(x)  # (T + 1, n, H)
        hs_t = hs[:T]
        logp_all = F.log_softmax_lastdim(self.actor.action_logits(hs_t))
        logp = F.take_last(logp_all, buf.actions[:, a_idx])
        ppo = F.mean(ppo_clip_term(logp, buf.logp[:, a_idx], adv, cfg.clip_eps))
        objective = ppo
        ent_value = 0.0
        if self.actor.use_hyper:
            logits = self.actor.hyper_logits(hs_t, self.local)
            ent = F.mean(entropy(F.softmax_lastdim(logits), F.log_softmax_lastdim(logits)))
            ent_value = float(ent.data)
            if cfg.entropy_coef != 0.0:
                objective = objective + cfg.entropy_coef * ent
            # TD gradient reaches only the hyper head, never the GRU
            w = F.softmax_lastdim(self.actor.hyper_logits(F.detach(hs), self.local))
            if not cfg.hyper_grad_from_td:
                w = F.detach(w)
        else:
            w = Tensor(np.ones((T + 1, len(a_idx), 1)))
        if self.shared:
            Z = self.critic.values_from_embedding(x, self.G)
        else:
            Z = self.critic.values(buf.obs[:, self.view], self.view_G)[:, self.view_rows, :]
        V = joint_value(Z, w)  # (T + 1, n)
        r = buf.rewards[:, a_idx] * cfg.reward_scale
        target = F.detach(V[1:]) if bootstrap is None else Tensor(bootstrap)
        td = Tensor(r) + cfg.gamma * target - V[:T]
        critic = 0.5 * F.mean(F.square(td))
        return LossTerms(objective, critic, float(ppo.data), ent_value, V.data[1:].copy())

    def update(self, buf: TrajectoryBuffer, adv: np.ndarray) -> LossTerms:
        """One gradient step on both networks from the same forward pass."""
        get_tape().clear()
        terms = self.losses(buf, adv)
        backward(-terms.objective + terms.critic)
        clip_grad_norm(self.actor_params, self.config.max_grad_norm)
        clip_grad_norm(self.critic_params, self.config.max_grad_norm)
        adam_step(self.actor_params, self.actor_opt, self.config.actor_lr)
        adam_step(self.critic_params, self.critic_opt, self.config.critic_lr)
        return terms


def actor_objective(buf: TrajectoryBuffer, learner: Learner, adv: np.ndarray) -> Tensor:
    return learner.losses(buf, adv).objective


def critic_loss(buf: TrajectoryBuffer, learner: Learner, adv: np.ndarray | None = None, bootstrap=None) -> Tensor:
    if adv is None:
        adv = np.zeros((buf.T, len(learner.agents)))
    return learner.losses(buf, adv, bootstrap).critic


def bootstrap_values(buf: TrajectoryBuffer, learner: Learner) -> np.ndarray:
    """V(t+1) under the current parameters, as the critic loss sees it."""
    with no_grad():
        return learner.losses(buf, np.zeros((buf.T, len(learner.agents)))).bootstrap


class Controller:
    """A set of learners that together cover every intersection."""

    def __init__(self, learners: list[Learner], n_agents: int, config: Config, kind: str):
        self.learners = learners
        self.n_agents = n_agents
        self.config = config
        self.kind = kind

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for lr in self.learners:
            out.update(lr.parameters())
        return out

    def actor_parameter_count(self) -> int:
        return sum(p.size for lr in self.learners for p in lr.actor_params.values())


def collect_episode(
    env,
    controller: Controller,
    rng: np.random.Generator,
    episode: int = 0,
    greedy: bool = False,
    stream: str = "train",
    trace: list | None = None,
) -> TrajectoryBuffer:
    """Run one episode with the current policy and record everything needed
    for the update. Critic values are evaluated in one batched pass after the
    episode (they do not influence the actions)."""
    if env.n_agents != controller.n_agents:
        raise ValueError(f"environment has {env.n_agents} agents, controller {controller.n_agents}")
    cfg = controller.config
    N, T, Hd, k = env.n_agents, env.steps_per_episode, cfg.hidden, cfg.k
    obs = env.reset(episode, stream)
    obs_buf = np.empty((T + 1, N, obs.shape[1]))
    hid = np.zeros((T, N, Hd))
    actions = np.zeros((T, N), dtype=np.int64)
    logp = np.zeros((T, N))
    w = np.zeros((T + 1, N, k))
    rewards = np.zeros((T, N))
    h = np.zeros((N, Hd))
    for t in range(T):
        obs_buf[t] = obs
        if trace is not None:
            trace.append((env.state.clock, obs.copy()))
        hid[t] = h
        probs = np.empty((N, 8))
        for lr in controller.learners:
            h_new, p, wt = lr.act(obs, h[lr.agents])
            h[lr.agents] = h_new
            probs[lr.agents] = p
            w[t, lr.agents] = wt
        a = probs.argmax(axis=-1) if greedy else sample_actions(probs, rng)
        actions[t] = a
        logp[t] = np.log(probs[np.arange(N), a])
        obs, r, _ = env.step(a)
        rewards[t] = r
    obs_buf[T] = obs
    if trace is not None:
        trace.append((env.state.clock, obs.copy()))
    z = np.zeros((T + 1, N, k))
    for lr in controller.learners:
        _, _, wT = lr.act(obs, h[lr.agents])
        w[T, lr.agents] = wT
        z[:, lr.agents] = lr.values(obs_buf)
    values = (z * w).sum(axis=-1)
    m_tt = env.travel_time() if env.state.spawned else float("nan")
    return TrajectoryBuffer(obs_buf, hid, actions, logp, w, z, values, rewards, m_tt)


@dataclass
class EpisodeRecord:
    episode: int
    m_tt: float
    mean_reward: float
    actor_obj: float
    critic_loss: float
    mean_hyper_entropy: float
    wallclock_s: float

    FIELDS = ("episode", "m_tt", "mean_reward", "actor_obj", "critic_loss", "mean_hyper_entropy", "wallclock_s")


@dataclass
class TrainResult:
    controller: Controller
    records: list = field(default_factory=list)


def make_controller(kind: str, n_agents: int, G, config: Config, seed: int = 0) -> Controller:
    """Build learners for a controller kind: ``shared`` (one learner) or
    ``independent`` (one learner per agent)."""
    if kind == "shared":
        learners = [Learner(np.arange(n_agents), n_agents, G, config, seed)]
    elif kind == "independent":
        learners = [Learner([i], n_agents, G, config, seed, name=f"agent{i}") for i in range(n_agents)]
    else:
        raise ValueError(f"unknown controller kind {kind!r}")
    return Controller(learners, n_agents, config, kind)


def advantages_for(buf: TrajectoryBuffer, learner: Learner, cfg: Config) -> np.ndarray:
    idx = learner.agents
    gae = compute_gae(buf.rewards[:, idx] * cfg.reward_scale, buf.values[:, idx], cfg.gamma, cfg.gae_lambda)
    adv = gae.advantages
    return normalize(adv) if cfg.normalize_advantages else adv


def train(
    env,
    config: Config,
    controller: Controller | None = None,
    seed: int = 0,
    kind: str = "shared",
    on_episode=None,
) -> TrainResult:
    """Algorithm loop: per episode, collect, compute GAE once, then
    ``config.epochs`` joint actor/critic updates on the full batch."""
    if controller is None:
        controller = make_controller(kind, env.n_agents, env.G, config, seed)
    rng = substream(seed, "policy")
    result = TrainResult(controller)
    start = time.perf_counter()
    for ep in range(config.episodes):
        buf = collect_episode(env, controller, rng, episode=ep)
        advs = [advantages_for(buf, lr, config) for lr in controller.learners]
        objs, crits, ents = [], [], []
        for _ in range(config.epochs):
            objs, crits, ents = [], [], []
            for lr, adv in zip(controller.learners, advs):
                terms = lr.update(buf, adv)
                objs.append(float(terms.objective.data))
                crits.append(float(terms.critic.data))
                ents.append(terms.entropy)
        rec = EpisodeRecord(
            episode=ep,
            m_tt=buf.m_tt,
            mean_reward=float(buf.rewards.mean()),
            actor_obj=float(np.mean(objs)),
            critic_loss=float(np.mean(crits)),
            mean_hyper_entropy=float(np.mean(ents)),
            wallclock_s=time.perf_counter() - start,
        )
        result.records.append(rec)
        if on_episode is not None:
            on_episode(rec, controller)
    return result


def evaluate(env, controller: Controller, episodes: int = 1, greedy: bool = True, seed: int = 0) -> list[float]:
    """m_tt of held-out evaluation episodes."""
    rng = substream(seed, "eval-policy")
    return [
        collect_episode(env, controller, rng, episode=m, greedy=greedy, stream="eval").m_tt
        for m in range(episodes)
    ]


def synthetic_buffer(n_agents: int, T: int, k: int, seed: int = 0, obs_dim: int = 12) -> TrajectoryBuffer:
    """Random but well-formed batch for gradient checks and equivalence runs.

    Behaviour log-probs are random, so ratios are spread on both sides of the
    clip range rather than all equal to one.
    """
    rng = substream(seed, "synthetic")
    obs = rng.poisson(3.0, size=(T + 1, n_agents, obs_dim)).astype(np.float64)
    w = rng.dirichlet(np.ones(k), size=(T + 1, n_agents))
    z = rng.normal(size=(T + 1, n_agents, k))
    return TrajectoryBuffer(
        obs=obs,
        hidden=np.zeros((T, n_agents, 0)),
        actions=rng.integers(0, 8, size=(T, n_agents)),
        logp=np.log(rng.uniform(0.05, 0.3, size=(T, n_agents))),
        w=w,
        z=z,
        values=(w * z).sum(-1),
        rewards=-rng.poisson(20.0, size=(T, n_agents)).astype(np.float64),
        m_tt=0.0,
    )
