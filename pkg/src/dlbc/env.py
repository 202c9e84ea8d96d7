"""Continuous 2-D pursuit-evasion arena with scripted evaders.

Entities are stored pursuers first, then evaders. Physics is a damped double
integrator: ``v <- damping * v + dt * accel * action`` (speed-capped per role),
``p <- p + dt * v`` (clamped to the arena, no bounce). The array kernels below
accept arbitrary leading batch axes so that ``VecPursuitEnv`` steps many
arenas in one call.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

TIERS = {"5v2": (5, 2), "6v2": (6, 2), "7v2": (7, 2)}


@dataclass(frozen=True)
class EnvConfig:
    num_pursuers: int = 5
    num_evaders: int = 2
    half_width: float = 1.0
    dt: float = 0.1
    damping: float = 0.75
    pursuer_max_speed: float = 1.0
    evader_max_speed: float = 1.3
    pursuer_accel: float = 3.0
    evader_accel: float = 4.0
    pursuer_radius: float = 0.075
    evader_radius: float = 0.05
    max_steps: int = 100
    collision_reward: float = 10.0
    shaping_coeff: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_pursuers < 1 or self.num_evaders < 1:
            raise ValueError("need at least one pursuer and one evader")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")
        if not self.evader_max_speed > self.pursuer_max_speed:
            raise ValueError("evaders must be faster than pursuers")
        if not (self.pursuer_radius > 0 and self.evader_radius > 0):
            raise ValueError("radii must be positive")
        if self.max_steps < 1 or self.half_width <= 0:
            raise ValueError("max_steps and half_width must be positive")

    @classmethod
    def tier(cls, name: str, **overrides) -> "EnvConfig":
        if name not in TIERS:
            raise ValueError(f"unknown scenario tier {name!r}; expected one of {sorted(TIERS)}")
        n, m = TIERS[name]
        return cls(num_pursuers=n, num_evaders=m, **overrides)

    @property
    def num_entities(self) -> int:
        return self.num_pursuers + self.num_evaders

    @property
    def obs_dim(self) -> int:
        return 4 + 2 * (self.num_pursuers - 1) + 4 * self.num_evaders

    def radii(self) -> np.ndarray:
        return np.array(
            [self.pursuer_radius] * self.num_pursuers + [self.evader_radius] * self.num_evaders
        )

    def max_speeds(self) -> np.ndarray:
        return np.array(
            [self.pursuer_max_speed] * self.num_pursuers
            + [self.evader_max_speed] * self.num_evaders
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WorldState:
    pos: np.ndarray  # (entities, 2)
    vel: np.ndarray  # (entities, 2)
    step: int = 0

    def copy(self) -> "WorldState":
        return WorldState(self.pos.copy(), self.vel.copy(), self.step)


@dataclass
class StepResult:
    observations: np.ndarray  # (pursuers, obs_dim)
    rewards: np.ndarray  # (pursuers,)
    done: bool
    collisions: int


# array kernels (leading batch axes allowed)


def integrate(pos, vel, actions, config: EnvConfig):
    """Advance physics one step. ``actions`` are per-entity, in [-1, 1]^2."""
    n = config.num_pursuers
    accel = np.empty(actions.shape[-2])
    accel[:n] = config.pursuer_accel
    accel[n:] = config.evader_accel
    vel = config.damping * vel + config.dt * accel[:, None] * actions
    speed = np.sqrt(np.sum(vel * vel, axis=-1, keepdims=True))
    cap = config.max_speeds()[:, None]
    vel = np.where(speed > cap, vel * (cap / np.maximum(speed, 1e-12)), vel)
    hw = config.half_width
    pos = np.clip(pos + config.dt * vel, -hw, hw)
    return pos, vel


def evader_actions(pos, config: EnvConfig) -> np.ndarray:
    """Scripted flight: unit vector of inverse-square repulsion from pursuers and walls."""
    n = config.num_pursuers
    pursuers = pos[..., :n, :]
    evaders = pos[..., n:, :]
    diff = evaders[..., :, None, :] - pursuers[..., None, :, :]  # (..., M, N, 2)
    dist = np.maximum(np.sqrt(np.sum(diff * diff, axis=-1, keepdims=True)), 1e-6)
    force = np.sum(diff / dist**3, axis=-2)
    hw = config.half_width
    near_lo = np.maximum(evaders + hw, 1e-3)
    near_hi = np.maximum(hw - evaders, 1e-3)
    force = force + 1.0 / near_lo**2 - 1.0 / near_hi**2
    norm = np.sqrt(np.sum(force * force, axis=-1, keepdims=True))
    unit = np.where(norm > 1e-12, force / np.maximum(norm, 1e-12), 0.0)
    return np.clip(unit, -1.0, 1.0)


def pursuer_evader_distances(pos, config: EnvConfig) -> np.ndarray:
    n = config.num_pursuers
    diff = pos[..., :n, None, :] - pos[..., None, n:, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))  # (..., N, M)


def rewards_from_positions(pos, config: EnvConfig):
    """Per-pursuer rewards and the number of overlapping pursuer/evader pairs."""
    d = pursuer_evader_distances(pos, config)
    hits = d < (config.pursuer_radius + config.evader_radius)
    reward = config.collision_reward * hits.sum(axis=-1) - config.shaping_coeff * d.min(axis=-1)
    return reward, hits.sum(axis=(-2, -1))


def observations_from_state(pos, vel, config: EnvConfig) -> np.ndarray:
    """Per-pursuer observation vectors, shape ``(..., N, obs_dim)``.

    Layout: own position, own velocity, positions of the other pursuers
    relative to self (index order, self skipped), then for each evader its
    position and velocity relative to self.
    """
    n, m = config.num_pursuers, config.num_evaders
    p_pos, p_vel = pos[..., :n, :], vel[..., :n, :]
    e_pos, e_vel = pos[..., n:, :], vel[..., n:, :]
    rel_p = p_pos[..., None, :, :] - p_pos[..., :, None, :]  # (..., self, other, 2)
    others = ~np.eye(n, dtype=bool)
    batch = pos.shape[:-2]
    rel_p = rel_p[..., others, :].reshape(*batch, n, 2 * (n - 1))
    rel_e_pos = e_pos[..., None, :, :] - p_pos[..., :, None, :]
    rel_e_vel = e_vel[..., None, :, :] - p_vel[..., :, None, :]
    ev = np.concatenate([rel_e_pos, rel_e_vel], axis=-1).reshape(*batch, n, 4 * m)
    return np.concatenate([p_pos, p_vel, rel_p, ev], axis=-1)


def _check_actions(actions, config: EnvConfig) -> np.ndarray:
    actions = np.asarray(actions, dtype=float)
    if actions.shape[-2:] != (config.num_pursuers, 2):
        raise ValueError(
            f"expected actions of shape (..., {config.num_pursuers}, 2), got {actions.shape}"
        )
    if not np.all(np.isfinite(actions)):
        raise ValueError("non-finite pursuer action")
    return np.clip(actions, -1.0, 1.0)


# single arena


def sample_positions(config: EnvConfig, rng: np.random.Generator, max_tries: int = 1000) -> np.ndarray:
    radii = config.radii()
    hw = config.half_width
    if np.sum(np.pi * radii**2) > 0.5 * (2 * hw) ** 2 or np.max(radii) >= hw:
        raise ValueError("arena too small to place all entities without overlap")
    pos = np.zeros((len(radii), 2))
    for i, r in enumerate(radii):
        for _ in range(max_tries):
            cand = rng.uniform(-hw + r, hw - r, size=2)
            if i == 0 or np.all(np.linalg.norm(pos[:i] - cand, axis=1) >= radii[:i] + r):
                pos[i] = cand
                break
        else:
            raise ValueError("arena too small to place all entities without overlap")
    return pos


class PursuitEnv:
    """One arena. ``reset`` and ``step`` are deterministic given the seed."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.state: WorldState | None = None

    def reset(self, seed: int | None = None) -> tuple[WorldState, np.ndarray]:
        seed = self.config.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        pos = sample_positions(self.config, rng)
        self.state = WorldState(pos, np.zeros_like(pos), 0)
        return self.state.copy(), observations_from_state(pos, self.state.vel, self.config)

    def evader_policy(self, evader: int) -> np.ndarray:
        if not 0 <= evader < self.config.num_evaders:
            raise IndexError(f"unknown evader {evader}")
        return evader_actions(self.state.pos, self.config)[evader]

    def compute_rewards(self) -> np.ndarray:
        return rewards_from_positions(self.state.pos, self.config)[0]

    def observations(self) -> np.ndarray:
        return observations_from_state(self.state.pos, self.state.vel, self.config)

    def step(self, pursuer_actions) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        acts = _check_actions(pursuer_actions, self.config)
        ev = evader_actions(self.state.pos, self.config)
        pos, vel = integrate(self.state.pos, self.state.vel, np.concatenate([acts, ev]), self.config)
        self.state = WorldState(pos, vel, self.state.step + 1)
        reward, hits = rewards_from_positions(pos, self.config)
        return StepResult(
            observations=observations_from_state(pos, vel, self.config),
            rewards=reward,
            done=self.state.step >= self.config.max_steps,
            collisions=int(hits),
        )


class VecPursuitEnv:
    """``num_envs`` arenas stepped together; each arena auto-resets when its episode ends.

    Episode seeds for arena ``k`` come from its own spawned seed sequence, so
    the whole stream is fixed by ``seed``.
    """

    def __init__(self, config: EnvConfig, num_envs: int, seed: int):
        self.config = config
        self.num_envs = num_envs
        self._rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(num_envs)]
        self.pos = np.zeros((num_envs, config.num_entities, 2))
        self.vel = np.zeros_like(self.pos)
        self.steps = np.zeros(num_envs, dtype=int)
        self.episode_returns = np.zeros((num_envs, config.num_pursuers))

    def _reset_one(self, k: int):
        self.pos[k] = sample_positions(self.config, self._rngs[k])
        self.vel[k] = 0.0
        self.steps[k] = 0
        self.episode_returns[k] = 0.0

    def reset(self) -> np.ndarray:
        for k in range(self.num_envs):
            self._reset_one(k)
        return observations_from_state(self.pos, self.vel, self.config)

    def step(self, pursuer_actions):
        """Returns ``(obs, rewards, dones, finished_returns)``.

        ``obs`` is the post-reset observation for arenas that just finished;
        ``finished_returns`` lists per-pursuer episode returns of those arenas.
        """
        acts = _check_actions(pursuer_actions, self.config)
        ev = evader_actions(self.pos, self.config)
        self.pos, self.vel = integrate(self.pos, self.vel, np.concatenate([acts, ev], axis=-2), self.config)
        self.steps += 1
        reward, _ = rewards_from_positions(self.pos, self.config)
        self.episode_returns += reward
        dones = self.steps >= self.config.max_steps
        finished = []
        for k in np.flatnonzero(dones):
            finished.append(self.episode_returns[k].copy())
            self._reset_one(k)
        obs = observations_from_state(self.pos, self.vel, self.config)
        return obs, reward, dones, finished


def rollout_trajectory(env: PursuitEnv, policy, seed: int) -> list[dict]:
    """Run one episode with ``policy(obs) -> actions`` and return per-step records."""
    state, obs = env.reset(seed)
    records = [_record(state, np.zeros(env.config.num_pursuers), 0)]
    done = False
    while not done:
        result = env.step(policy(obs))
        obs, done = result.observations, result.done
        records.append(_record(env.state, result.rewards, result.collisions))
    return records


def _record(state: WorldState, rewards, collisions: int) -> dict:
    return {
        "step": int(state.step),
        "positions": state.pos.tolist(),
        "velocities": state.vel.tolist(),
        "rewards": np.asarray(rewards).tolist(),
        "collisions": int(collisions),
    }


def write_trajectory(records: list[dict], path) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")


def read_trajectory(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def with_counts(config: EnvConfig, num_pursuers: int, num_evaders: int) -> EnvConfig:
    return replace(config, num_pursuers=num_pursuers, num_evaders=num_evaders)
