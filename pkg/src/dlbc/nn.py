"""Multilayer perceptrons, the grouped-diversity actor, per-agent critics, Adam."""

from __future__ import annotations

import math

import numpy as np

from .autograd import Tensor, no_grad
from .diversity import DiagGaussian, DLBCParams, PolicySnapshot

LOG_2PI = math.log(2.0 * math.pi)


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class MLP:
    """tanh MLP; with ``stack=n`` it holds ``n`` independent copies evaluated in one matmul.

    A stacked MLP maps inputs of shape ``(n, batch, in)`` to ``(n, batch, out)``.
    """

    def __init__(
        self,
        widths,
        rng: np.random.Generator,
        gain: float = math.sqrt(2.0),
        out_gain: float = 1.0,
        stack: int | None = None,
    ):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        self.widths = widths
        self.stack = stack
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        n_layers = len(widths) - 1
        for li, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            g = out_gain if li == n_layers - 1 else gain
            if stack is None:
                w = orthogonal((fan_in, fan_out), g, rng) if g else np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                w = np.stack(
                    [
                        orthogonal((fan_in, fan_out), g, rng) if g else np.zeros((fan_in, fan_out))
                        for _ in range(stack)
                    ]
                )
                b = np.zeros((stack, 1, fan_out))
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(b, requires_grad=True))

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def parameters(self) -> list[Tensor]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input width {x.shape[-1]} != network input width {self.in_dim}")
        squeeze = x.ndim == 1
        if squeeze:
            x = x.reshape(1, -1)
        last = len(self.weights) - 1
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if li < last:
                x = x.tanh()
        return x.reshape(-1) if squeeze else x

    def forward_member(self, i: int, x) -> Tensor:
        """Evaluate copy ``i`` of a stacked MLP on ``(batch, in)`` inputs."""
        if self.stack is None:
            raise ValueError("forward_member requires a stacked MLP")
        if not 0 <= i < self.stack:
            raise IndexError(f"member {i} out of range for {self.stack} copies")
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input width {x.shape[-1]} != network input width {self.in_dim}")
        last = len(self.weights) - 1
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w[i] + b[i]
            if li < last:
                x = x.tanh()
        return x

    def topology(self) -> dict:
        return {"widths": self.widths, "stack": self.stack}


class DLBCActor:
    """Gaussian actor: ``mean_i(o) = trunk(o) + scale * head_i(o)``, shared log-std.

    The trunk is the public policy shared by every agent. Each agent owns a
    deviation head whose last layer starts at zero, so at initialisation all
    agents act identically. ``scale`` is a plain float installed by the
    trainer and never differentiated.
    """

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        num_agents: int,
        rng: np.random.Generator,
        hidden=(64, 64),
        head_hidden=(32,),
        init_log_std: float = -0.5,
    ):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.num_agents = num_agents
        self.trunk = MLP([obs_dim, *hidden, act_dim], rng, out_gain=0.01)
        self.heads = MLP([obs_dim, *head_hidden, act_dim], rng, out_gain=0.0, stack=num_agents)
        self.log_std = Tensor(np.full(act_dim, init_log_std), requires_grad=True)
        self.scale = 1.0

    def parameters(self) -> list[Tensor]:
        return self.trunk.parameters() + self.heads.parameters() + [self.log_std]

    def _check_obs(self, obs: np.ndarray):
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"observation width {obs.shape[-1]} != {self.obs_dim}")

    def forward_all(self, obs, scale: float | None = None) -> tuple[Tensor, Tensor]:
        """Means for every agent on its own observations.

        ``obs`` has shape ``(num_agents, batch, obs_dim)``. Returns the mean
        tensor ``(num_agents, batch, act_dim)`` and the shared log-std.
        """
        obs = obs if isinstance(obs, Tensor) else Tensor(obs)
        self._check_obs(obs.data)
        if obs.shape[0] != self.num_agents:
            raise ValueError(f"expected {self.num_agents} agent rows, got {obs.shape[0]}")
        s = self.scale if scale is None else scale
        mean = self.trunk(obs) + self.heads(obs) * s
        return mean, self.log_std

    def distribution(self, agent: int, obs) -> DiagGaussian:
        """Action distribution of one agent for a batch of observations."""
        if not 0 <= agent < self.num_agents:
            raise IndexError(f"unknown agent {agent}")
        obs = np.asarray(obs, dtype=float)
        self._check_obs(obs)
        with no_grad():
            x = Tensor(np.atleast_2d(obs))
            mean = (self.trunk(x) + self.heads.forward_member(agent, x) * self.scale).data
        if obs.ndim == 1:
            mean = mean[0]
        std = np.broadcast_to(np.exp(self.log_std.data), mean.shape)
        return DiagGaussian(mean, std)

    def snapshot(self, obs: np.ndarray, scale: float | None = None) -> PolicySnapshot:
        """All agents evaluated on one shared observation batch ``(batch, obs_dim)``."""
        obs = np.asarray(obs, dtype=float)
        self._check_obs(obs)
        if obs.ndim != 2 or obs.shape[0] == 0:
            raise ValueError("snapshot needs a non-empty (batch, obs_dim) observation sample")
        shared = np.broadcast_to(obs, (self.num_agents, *obs.shape))
        with no_grad():
            mean, log_std = self.forward_all(shared, scale)
        std = np.broadcast_to(np.exp(log_std.data), mean.shape)
        return PolicySnapshot(mean.data, np.array(std))

    def state_dict(self) -> dict:
        return {
            "trunk": [p.data.ravel().tolist() for p in self.trunk.parameters()],
            "heads": [p.data.ravel().tolist() for p in self.heads.parameters()],
            "log_std": self.log_std.data.tolist(),
            "scale": self.scale,
        }

    def load_state_dict(self, state: dict):
        for p, flat in zip(self.trunk.parameters(), state["trunk"]):
            p.data = np.asarray(flat, dtype=float).reshape(p.shape)
        for p, flat in zip(self.heads.parameters(), state["heads"]):
            p.data = np.asarray(flat, dtype=float).reshape(p.shape)
        self.log_std.data = np.asarray(state["log_std"], dtype=float)
        self.scale = float(state["scale"])

    def topology(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "num_agents": self.num_agents,
            "trunk": self.trunk.topology(),
            "heads": self.heads.topology(),
        }


class Critic:
    """One independent value network per agent (stacked, no parameter sharing)."""

    def __init__(self, obs_dim: int, num_agents: int, rng: np.random.Generator, hidden=(64, 64)):
        self.num_agents = num_agents
        self.net = MLP([obs_dim, *hidden, 1], rng, out_gain=1.0, stack=num_agents)

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()

    def __call__(self, obs) -> Tensor:
        """Values of shape ``(num_agents, batch)`` for obs ``(num_agents, batch, obs_dim)``."""
        out = self.net(obs)
        return out.reshape(*out.shape[:-1])

    def state_dict(self) -> dict:
        return {"net": [p.data.ravel().tolist() for p in self.parameters()]}

    def load_state_dict(self, state: dict):
        for p, flat in zip(self.parameters(), state["net"]):
            p.data = np.asarray(flat, dtype=float).reshape(p.shape)


# Gaussian densities


def log_prob(dist: DiagGaussian, action) -> np.ndarray | float:
    """Log density of a diagonal Gaussian, summed over action dimensions."""
    action = np.asarray(action, dtype=float)
    if action.shape[-1] != dist.dim:
        raise ValueError(f"action dim {action.shape[-1]} != distribution dim {dist.dim}")
    z = (action - dist.mean) / dist.std
    lp = -0.5 * np.sum(z * z, axis=-1) - np.sum(np.log(dist.std), axis=-1) - 0.5 * dist.dim * LOG_2PI
    return float(lp) if np.ndim(lp) == 0 else lp


def entropy(dist: DiagGaussian) -> np.ndarray | float:
    h = np.sum(0.5 + 0.5 * LOG_2PI + np.log(dist.std), axis=-1)
    return float(h) if np.ndim(h) == 0 else h


def gaussian_log_prob(mean: Tensor, log_std: Tensor, action: np.ndarray) -> Tensor:
    """Differentiable diagonal-Gaussian log density (sums the last axis)."""
    if action.shape[-1] != mean.shape[-1]:
        raise ValueError("action and mean dimensionality differ")
    z = (Tensor(action) - mean) * (-log_std).exp()
    d = mean.shape[-1]
    return (z * z).sum(axis=-1) * -0.5 - log_std.sum() - 0.5 * d * LOG_2PI


def gaussian_entropy(log_std: Tensor) -> Tensor:
    d = log_std.shape[-1]
    return log_std.sum() + d * (0.5 + 0.5 * LOG_2PI)


# optimisation


def clip_grad_norm(params: list[Tensor], max_norm: float) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        coef = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * coef
    return total


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-5):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad * p.grad
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
