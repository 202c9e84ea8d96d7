"""Independent PPO over the grouped-diversity actor.

Every pursuer optimises its own clipped surrogate against its own critic.
The actor trunk is shared, so its gradient is the sum over the agents'
losses. Before each rollout the actor's diversity scale is refreshed from a
sample of recent observations so that the mixed intra/inter-group diversity
sits at the target level.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator

import numpy as np

from . import diversity as dv
from .autograd import Tensor, minimum, no_grad
from .env import EnvConfig, VecPursuitEnv
from .diversity import DiagGaussian
from .nn import (
    Adam,
    Critic,
    DLBCActor,
    clip_grad_norm,
    gaussian_entropy,
    gaussian_log_prob,
    log_prob,
)

log = logging.getLogger(__name__)

METHODS = ("dlbc", "fixed_snd_baseline")


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    epochs: int = 4
    minibatch_size: int = 256
    num_envs: int = 16
    steps_per_rollout: int = 100
    total_steps: int = 320_000
    ent_coef: float = 0.0
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    seeds: tuple[int, ...] = (0,)
    dlbc: dv.DLBCParams = field(default_factory=dv.DLBCParams)
    # linear alpha schedule from dlbc.alpha to alpha_end; None keeps alpha fixed
    alpha_end: float | None = None
    grouping_mode: str = "contiguous"
    method: str = "dlbc"
    # groups used by the diversity control; None means one per evader (dlbc) or 1 (baseline)
    num_groups: int | None = None
    snd_sample_size: int = 512
    actor_hidden: tuple[int, ...] = (64, 64)
    head_hidden: tuple[int, ...] = (32,)
    critic_hidden: tuple[int, ...] = (64, 64)
    init_log_std: float = -0.5

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if not self.clip_eps > 0 or not self.lr > 0:
            raise ValueError("clip_eps and lr must be positive")
        if min(self.epochs, self.minibatch_size, self.num_envs, self.steps_per_rollout) < 1:
            raise ValueError("epochs, minibatch_size, num_envs and steps_per_rollout must be >= 1")
        if self.total_steps % self.steps_per_batch != 0 or self.total_steps <= 0:
            raise ValueError(
                f"total_steps {self.total_steps} must be a positive multiple of "
                f"num_envs * steps_per_rollout = {self.steps_per_batch}"
            )
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "fixed_snd_baseline" and self.num_groups not in (None, 1):
            raise ValueError("the fixed-SND baseline controls a single group (num_groups must be 1)")
        if self.num_groups is not None and self.num_groups < 1:
            raise ValueError("num_groups must be >= 1")
        if self.grouping_mode not in ("contiguous", "round_robin"):
            raise ValueError(f"unknown grouping mode {self.grouping_mode!r}")
        if self.alpha_end is not None and not 0 <= self.alpha_end <= 1:
            raise ValueError("alpha_end must lie in [0, 1]")
        if self.snd_sample_size < 1:
            raise ValueError("snd_sample_size must be >= 1")

    @property
    def steps_per_batch(self) -> int:
        return self.num_envs * self.steps_per_rollout

    @property
    def num_rollouts(self) -> int:
        return self.total_steps // self.steps_per_batch

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        for k in ("actor_hidden", "head_hidden", "critic_hidden"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "dlbc" in d and isinstance(d["dlbc"], dict):
            d["dlbc"] = dv.DLBCParams(**d["dlbc"])
        for k in ("seeds", "actor_hidden", "head_hidden", "critic_hidden"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def assign_groups(num_pursuers: int, num_evaders: int, mode: str = "contiguous") -> dv.GroupPartition:
    """Split pursuers into ``num_evaders`` balanced teams."""
    if num_evaders < 1 or num_pursuers < num_evaders:
        raise ValueError(
            f"cannot split {num_pursuers} pursuers into {num_evaders} non-empty groups"
        )
    k = num_evaders
    if mode == "contiguous":
        # first (N mod K) groups get the extra member
        base, extra = divmod(num_pursuers, k)
        assignment = []
        for g in range(k):
            assignment += [g] * (base + (1 if g < extra else 0))
    elif mode == "round_robin":
        assignment = [i % k for i in range(num_pursuers)]
    else:
        raise ValueError(f"unknown grouping mode {mode!r}")
    return dv.GroupPartition(num_pursuers, tuple(assignment))


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (T, E, N, obs_dim)
    actions: np.ndarray  # (T, E, N, act_dim)
    log_probs: np.ndarray  # (T, E, N)
    rewards: np.ndarray  # (T, E, N)
    values: np.ndarray  # (T, E, N)
    dones: np.ndarray  # (T, E)
    last_values: np.ndarray  # (E, N), bootstrap for the post-rollout state
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return self.obs.shape[0] * self.obs.shape[1]


def _agent_major(obs: np.ndarray) -> np.ndarray:
    """(E, N, D) -> (N, E, D)"""
    return np.ascontiguousarray(np.swapaxes(obs, 0, 1))


def collect_rollouts(
    actor: DLBCActor,
    critic: Critic,
    envs: VecPursuitEnv,
    obs: np.ndarray,
    steps: int,
    rng: np.random.Generator,
):
    """Run ``steps`` vector steps on-policy.

    Returns ``(buffer, next_obs, finished_returns)`` where the last item
    lists per-pursuer returns of every episode that ended in this rollout.
    """
    e, n = envs.num_envs, envs.config.num_pursuers
    d_obs, d_act = obs.shape[-1], actor.act_dim
    buf = RolloutBuffer(
        obs=np.zeros((steps, e, n, d_obs)),
        actions=np.zeros((steps, e, n, d_act)),
        log_probs=np.zeros((steps, e, n)),
        rewards=np.zeros((steps, e, n)),
        values=np.zeros((steps, e, n)),
        dones=np.zeros((steps, e)),
        last_values=np.zeros((e, n)),
    )
    finished = []
    std = np.exp(actor.log_std.data)
    for t in range(steps):
        x = _agent_major(obs)
        with no_grad():
            mean, _ = actor.forward_all(x)
            value = critic(x).data
        noise = rng.standard_normal(mean.shape)
        action = mean.data + std * noise
        buf.obs[t] = obs
        buf.actions[t] = np.swapaxes(action, 0, 1)
        dist = DiagGaussian(mean.data, np.broadcast_to(std, mean.shape))
        buf.log_probs[t] = np.swapaxes(log_prob(dist, action), 0, 1)
        buf.values[t] = value.T
        obs, reward, dones, done_returns = envs.step(buf.actions[t])
        buf.rewards[t] = reward
        buf.dones[t] = dones
        finished.extend(done_returns)
    with no_grad():
        buf.last_values = critic(_agent_major(obs)).data.T
    return buf, obs, finished


def compute_gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """Generalised advantage estimates along axis 0.

    ``dones[t]`` marks that the episode ended after step ``t``; it cuts both
    the bootstrap and the advantage recursion. ``dones`` broadcasts against
    ``rewards`` from the left.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    last_value = np.asarray(last_value, dtype=float)
    if rewards.shape != values.shape or rewards.shape[0] != dones.shape[0]:
        raise ValueError("rewards, values and dones must be aligned")
    if last_value.shape != rewards.shape[1:]:
        raise ValueError("bootstrap value must match a single time slice")
    while dones.ndim < rewards.ndim:
        dones = dones[..., None]
    adv = np.zeros_like(rewards)
    next_adv = np.zeros_like(last_value)
    next_value = last_value
    for t in range(rewards.shape[0] - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def finalize_buffer(buf: RolloutBuffer, gamma: float, lam: float) -> RolloutBuffer:
    buf.advantages, buf.returns = compute_gae(
        buf.rewards, buf.values, buf.dones, buf.last_values, gamma, lam
    )
    return buf


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    kl: float
    clip_fraction: float


def ppo_loss(actor, critic, obs, actions, old_logp, adv, returns, config: TrainConfig):
    """Summed-over-agents PPO loss on agent-major arrays ``(N, B, ...)``.

    Returns the loss tensor and a dict of diagnostics.
    """
    mean, log_std = actor.forward_all(obs)
    logp = gaussian_log_prob(mean, log_std, actions)
    ratio = (logp - old_logp).exp()
    adv_t = Tensor(adv)
    surr = minimum(ratio * adv_t, ratio.clip(1.0 - config.clip_eps, 1.0 + config.clip_eps) * adv_t)
    n = obs.shape[0]
    policy_loss = -surr.mean(axis=1).sum()
    diff = critic(obs) - returns
    value_loss = (diff * diff).mean(axis=1).sum()
    ent = gaussian_entropy(log_std)
    loss = policy_loss + value_loss * config.vf_coef - ent * (n * config.ent_coef)
    r = ratio.data
    log_r = logp.data - old_logp
    info = {
        "policy_loss": policy_loss.item() / n,
        "value_loss": value_loss.item() / n,
        "entropy": ent.item(),
        "kl": float(np.mean((r - 1.0) - log_r)),
        "clip_fraction": float(np.mean(np.abs(r - 1.0) > config.clip_eps)),
    }
    return loss, info


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance per agent; ``adv`` is agent-major ``(N, B)``."""
    mu = adv.mean(axis=1, keepdims=True)
    sd = adv.std(axis=1, keepdims=True)
    return (adv - mu) / (sd + 1e-8)


def ppo_update(
    buf: RolloutBuffer,
    actor: DLBCActor,
    critic: Critic,
    optimizer: Adam,
    config: TrainConfig,
    rng: np.random.Generator,
) -> UpdateStats:
    if buf.advantages is None:
        raise ValueError("compute advantages before updating")
    t, e, n = buf.rewards.shape
    b = t * e
    obs = np.ascontiguousarray(buf.obs.reshape(b, n, -1).swapaxes(0, 1))
    actions = np.ascontiguousarray(buf.actions.reshape(b, n, -1).swapaxes(0, 1))
    old_logp = buf.log_probs.reshape(b, n).T
    adv = normalize_advantages(buf.advantages.reshape(b, n).T)
    returns = buf.returns.reshape(b, n).T
    params = actor.parameters() + critic.parameters()
    mb = min(config.minibatch_size, b)
    acc = {k: 0.0 for k in ("policy_loss", "value_loss", "entropy", "kl", "clip_fraction")}
    count = 0
    for _ in range(config.epochs):
        perm = rng.permutation(b)
        for start in range(0, b, mb):
            idx = perm[start : start + mb]
            loss, info = ppo_loss(
                actor, critic, obs[:, idx], actions[:, idx], old_logp[:, idx],
                adv[:, idx], returns[:, idx], config,
            )
            if not np.isfinite(loss.item()):
                raise FloatingPointError(f"non-finite PPO loss: {info}")
            optimizer.zero_grad()
            loss.backward()
            clip_grad_norm(params, config.max_grad_norm)
            optimizer.step()
            for k in acc:
                acc[k] += info[k]
            count += 1
    return UpdateStats(**{k: v / count for k, v in acc.items()})


def refresh_scale(
    actor: DLBCActor,
    partition: dv.GroupPartition,
    obs_sample: np.ndarray,
    params: dv.DLBCParams,
) -> dv.SNDReport:
    """Measure diversity at unit scale, install the scale that hits ``snd_des``.

    The returned report holds the unit-scale measurements and the installed
    scale.
    """
    obs_sample = np.asarray(obs_sample, dtype=float)
    if obs_sample.ndim != 2 or obs_sample.shape[0] == 0:
        raise ValueError("refresh_scale needs a non-empty (batch, obs_dim) sample")
    snap = actor.snapshot(obs_sample, scale=1.0)
    report = dv.measure(partition, snap, params)
    actor.scale = report.scale
    return report


def scaled_report(report: dv.SNDReport) -> dv.SNDReport:
    """Diversity the actor exhibits once ``report.scale`` is installed (linear in scale)."""
    s = report.scale
    return dv.SNDReport(
        intra_per_group=[s * v for v in report.intra_per_group],
        inter=s * report.inter,
        combined=s * report.combined,
        scale=s,
        raw_scale=report.raw_scale,
    )


METRIC_FIELDS = (
    "step",
    "mean_episode_reward",
    "snd_intra",
    "snd_inter",
    "combined_snd",
    "scale",
    "alpha",
    "policy_loss",
    "value_loss",
    "entropy",
    "kl",
    "clip_fraction",
    "wall_time",
)


class Trainer:
    """Owns the actor, critics, optimiser and arenas for one seed."""

    def __init__(self, env_config: EnvConfig, config: TrainConfig, seed: int, record_wall_time: bool = False):
        self.env_config = env_config
        self.config = config
        self.seed = seed
        self.record_wall_time = record_wall_time
        seq = np.random.SeedSequence(seed)
        init_seq, env_seq, act_seq, upd_seq = seq.spawn(4)
        init_rng = np.random.default_rng(init_seq)
        n = env_config.num_pursuers
        self.actor = DLBCActor(
            env_config.obs_dim, 2, n, init_rng,
            hidden=config.actor_hidden, head_hidden=config.head_hidden,
            init_log_std=config.init_log_std,
        )
        self.critic = Critic(env_config.obs_dim, n, init_rng, hidden=config.critic_hidden)
        self.optimizer = Adam(self.actor.parameters() + self.critic.parameters(), lr=config.lr)
        self.envs = VecPursuitEnv(env_config, config.num_envs, int(env_seq.generate_state(1)[0]))
        self.action_rng = np.random.default_rng(act_seq)
        self.update_rng = np.random.default_rng(upd_seq)
        # groups used for reporting; the control partition differs for the baseline
        self.groups = assign_groups(n, env_config.num_evaders, config.grouping_mode)
        if config.method == "fixed_snd_baseline" or config.num_groups == 1:
            self.control = dv.GroupPartition(n, (0,) * n)
        elif config.num_groups is None:
            self.control = self.groups
        else:
            self.control = assign_groups(n, config.num_groups, config.grouping_mode)
        self.step = 0
        self.obs = self.envs.reset()
        self._obs_pool = self.obs.reshape(-1, env_config.obs_dim)
        self._last_reward = None
        self.last_report: dv.SNDReport | None = None

    def alpha_at(self, rollout: int) -> float:
        a0 = self.config.dlbc.alpha
        if self.config.alpha_end is None or self.config.num_rollouts == 1:
            return a0
        frac = rollout / (self.config.num_rollouts - 1)
        return a0 + frac * (self.config.alpha_end - a0)

    def _obs_sample(self) -> np.ndarray:
        pool = self._obs_pool
        k = self.config.snd_sample_size
        if len(pool) <= k:
            return pool
        idx = np.sort(self.update_rng.choice(len(pool), size=k, replace=False))
        return pool[idx]

    def measure(self, obs_sample: np.ndarray) -> dict:
        """Reporting-partition diversity at the installed scale."""
        snap = self.actor.snapshot(obs_sample)
        dist = dv.pairwise_distance_matrix(snap)
        groups = self.groups.groups
        intra = [dv.snd_intra(g, snap, dist) for g in groups]
        inter = dv.aggregate_inter(self.groups, snap, dist) if len(groups) > 1 else 0.0
        return {"snd_intra": intra, "snd_inter": inter}

    def run(self) -> Iterator[dict]:
        """Train to ``total_steps``, yielding one metrics row per rollout."""
        cfg = self.config
        t0 = time.perf_counter()
        for r in range(cfg.num_rollouts):
            alpha = self.alpha_at(r)
            params = replace(cfg.dlbc, alpha=alpha)
            sample = self._obs_sample()
            report = refresh_scale(self.actor, self.control, sample, params)
            self.last_report = report
            measured = self.measure(sample)
            buf, self.obs, finished = collect_rollouts(
                self.actor, self.critic, self.envs, self.obs, cfg.steps_per_rollout, self.action_rng
            )
            self._obs_pool = buf.obs.reshape(-1, self.env_config.obs_dim)
            finalize_buffer(buf, cfg.gamma, cfg.gae_lambda)
            stats = ppo_update(buf, self.actor, self.critic, self.optimizer, cfg, self.update_rng)
            self.step += cfg.steps_per_batch
            if finished:
                self._last_reward = float(np.mean([f.mean() for f in finished]))
            elif self._last_reward is None:
                self._last_reward = float(self.envs.episode_returns.mean())
            yield {
                "step": self.step,
                "mean_episode_reward": self._last_reward,
                "snd_intra": measured["snd_intra"],
                "snd_inter": measured["snd_inter"],
                "combined_snd": report.scale * report.combined,
                "scale": report.scale,
                "alpha": alpha,
                "policy_loss": stats.policy_loss,
                "value_loss": stats.value_loss,
                "entropy": stats.entropy,
                "kl": stats.kl,
                "clip_fraction": stats.clip_fraction,
                "wall_time": time.perf_counter() - t0 if self.record_wall_time else 0.0,
            }

    def greedy_policy(self):
        """Mean-action policy ``obs (N, obs_dim) -> actions (N, 2)``."""
        def policy(obs):
            x = np.asarray(obs)[:, None, :]
            with no_grad():
                mean, _ = self.actor.forward_all(x)
            return mean.data[:, 0, :]
        return policy
