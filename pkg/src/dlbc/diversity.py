"""Wasserstein-2 distances between Gaussian policies and group diversity metrics.

A policy snapshot is a pair of arrays ``(means, stds)`` of shape
``(num_agents, num_obs, action_dim)``: the action distribution of every agent
evaluated on a shared batch of observations. All diversity measures average
the per-observation W2 distance over that batch before averaging over agent
pairs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_DENOM_FLOOR = 1e-8
DEFAULT_MAX_SCALE = 1e3
PSD_TOL = 1e-10
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class DiagGaussian:
    """Gaussian with diagonal covariance ``diag(std**2)``.

    ``mean`` and ``std`` may carry leading batch dimensions; the last axis is
    the action dimension.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        if mean.ndim == 0 or mean.shape[-1] < 1:
            raise ValueError("mean must have at least one action dimension")
        if mean.shape != std.shape:
            raise ValueError(f"mean shape {mean.shape} != std shape {std.shape}")
        if not np.all(std > 0):
            raise ValueError("std must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


@dataclass(frozen=True)
class PolicySnapshot:
    """Per-agent action distributions over a common observation batch."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        stds = np.asarray(self.stds, dtype=float)
        if means.ndim != 3:
            raise ValueError("means must have shape (agents, observations, action_dim)")
        if means.shape != stds.shape:
            raise ValueError(f"means shape {means.shape} != stds shape {stds.shape}")
        if not np.all(stds > 0):
            raise ValueError("stds must be strictly positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @property
    def num_agents(self) -> int:
        return self.means.shape[0]

    @property
    def num_obs(self) -> int:
        return self.means.shape[1]

    def agent(self, i: int) -> DiagGaussian:
        return DiagGaussian(self.means[i], self.stds[i])


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint cover of agents ``0..num_agents-1`` by groups ``0..K-1``."""

    num_agents: int
    assignment: tuple[int, ...]

    def __post_init__(self):
        assignment = tuple(int(g) for g in self.assignment)
        if len(assignment) != self.num_agents:
            raise ValueError(
                f"assignment has {len(assignment)} entries for {self.num_agents} agents"
            )
        if self.num_agents < 1:
            raise ValueError("partition needs at least one agent")
        k = max(assignment) + 1
        if min(assignment) < 0 or set(assignment) != set(range(k)):
            raise ValueError("every group index in [0, K) must be assigned at least one agent")
        object.__setattr__(self, "assignment", assignment)

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[int]]) -> "GroupPartition":
        members = [a for g in groups for a in g]
        n = len(members)
        if sorted(members) != list(range(n)):
            raise ValueError("groups must be disjoint and cover 0..N-1")
        assignment = [0] * n
        for k, g in enumerate(groups):
            for a in g:
                assignment[a] = k
        return cls(n, tuple(assignment))

    @property
    def num_groups(self) -> int:
        return max(self.assignment) + 1

    @property
    def groups(self) -> list[tuple[int, ...]]:
        return [
            tuple(a for a, g in enumerate(self.assignment) if g == k)
            for k in range(self.num_groups)
        ]

    def to_dict(self) -> dict:
        return {"num_agents": self.num_agents, "assignment": list(self.assignment)}


@dataclass(frozen=True)
class DLBCParams:
    """Target diversity and the inter/intra mixing weight."""

    snd_des: float = 1.0
    alpha: float = 0.5
    denom_floor: float = DEFAULT_DENOM_FLOOR
    max_scale: float = DEFAULT_MAX_SCALE
    # "mean": unweighted over groups; "agent_weighted": by group size
    intra_aggregation: str = "mean"

    def __post_init__(self):
        if not self.snd_des >= 0:
            raise ValueError("snd_des must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.denom_floor > 0:
            raise ValueError("denom_floor must be > 0")
        if not self.max_scale > 0:
            raise ValueError("max_scale must be > 0")
        if self.intra_aggregation not in ("mean", "agent_weighted"):
            raise ValueError(f"unknown intra_aggregation {self.intra_aggregation!r}")


@dataclass
class SNDReport:
    intra_per_group: list[float]
    inter: float
    combined: float
    scale: float
    raw_scale: float = field(default=float("nan"))

    def to_dict(self) -> dict:
        return {
            "intra_per_group": list(self.intra_per_group),
            "inter": self.inter,
            "combined": self.combined,
            "scale": self.scale,
        }


def w2_diag(p: DiagGaussian, q: DiagGaussian) -> np.ndarray | float:
    """W2 distance between diagonal Gaussians (batched over leading axes).

    For diagonal covariances the Bures term reduces to the squared
    difference of standard deviations.
    """
    if p.mean.shape[-1] != q.mean.shape[-1]:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    sq = np.sum((p.mean - q.mean) ** 2, axis=-1) + np.sum((p.std - q.std) ** 2, axis=-1)
    d = np.sqrt(sq)
    return float(d) if np.ndim(d) == 0 else d


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    if w.min() < -PSD_TOL:
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def _check_cov(c: np.ndarray, dim: int, name: str) -> np.ndarray:
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if c.shape != (dim, dim):
        raise ValueError(f"{name} has shape {c.shape}, expected {(dim, dim)}")
    if np.max(np.abs(c - c.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(c))):
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (c + c.T)


def w2_full(mean1, cov1, mean2, cov2) -> float:
    """W2 distance between full-covariance Gaussians.

    ``sqrt(|m1 - m2|^2 + tr(C1 + C2 - 2 (C1^1/2 C2 C1^1/2)^1/2))`` with
    matrix square roots taken by symmetric eigendecomposition.
    """
    mean1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    mean2 = np.atleast_1d(np.asarray(mean2, dtype=float))
    if mean1.shape != mean2.shape or mean1.ndim != 1:
        raise ValueError(f"mean shapes {mean1.shape} and {mean2.shape} do not match")
    d = mean1.shape[0]
    c1 = _check_cov(cov1, d, "cov1")
    c2 = _check_cov(cov2, d, "cov2")
    r1 = _psd_sqrt(c1)
    cross = r1 @ c2 @ r1
    cross = _psd_sqrt(0.5 * (cross + cross.T))
    total = np.trace(c1) + np.trace(c2)
    bures = total - 2.0 * np.trace(cross)
    # cancellation noise around identical covariances
    if bures < 1e-12 * max(total, 1.0):
        bures = 0.0
    sq = float(np.sum((mean1 - mean2) ** 2)) + bures
    return float(np.sqrt(sq))


def mean_pairwise_w2(a: DiagGaussian, b: DiagGaussian) -> float:
    """Average W2 between two agents' distributions over a batch of observations."""
    if a.mean.ndim != 2 or b.mean.ndim != 2:
        raise ValueError("expected (num_obs, action_dim) distributions")
    if a.mean.shape[0] != b.mean.shape[0]:
        raise ValueError("agents must be evaluated on the same observations")
    if a.mean.shape[0] == 0:
        raise ValueError("empty observation batch")
    return float(np.mean(w2_diag(a, b)))


def pairwise_distance_matrix(snapshot: PolicySnapshot) -> np.ndarray:
    """Matrix ``D[i, j] = mean_pairwise_w2(agent i, agent j)``."""
    if snapshot.num_obs == 0:
        raise ValueError("empty observation batch")
    dm = snapshot.means[:, None] - snapshot.means[None, :]
    ds = snapshot.stds[:, None] - snapshot.stds[None, :]
    per_obs = np.sqrt(np.sum(dm**2, axis=-1) + np.sum(ds**2, axis=-1))
    return per_obs.mean(axis=-1)


def _check_group(group: Sequence[int], n: int) -> tuple[int, ...]:
    group = tuple(int(i) for i in group)
    if not group:
        raise ValueError("group must not be empty")
    if len(set(group)) != len(group):
        raise ValueError("group lists an agent twice")
    if min(group) < 0 or max(group) >= n:
        raise ValueError(f"group member out of range for {n} agents")
    return group


def snd_intra(group: Sequence[int], snapshot: PolicySnapshot, dist=None) -> float:
    """Mean pairwise W2 over all unordered pairs inside ``group`` (0 for a singleton)."""
    group = _check_group(group, snapshot.num_agents)
    n = len(group)
    if n == 1:
        return 0.0
    if dist is None:
        dist = pairwise_distance_matrix(snapshot)
    total = sum(dist[i, j] for i, j in itertools.combinations(group, 2))
    return float(2.0 / (n * (n - 1)) * total)


def snd_inter(
    group_a: Sequence[int], group_b: Sequence[int], snapshot: PolicySnapshot, dist=None
) -> float:
    """Mean W2 over all cross pairs (i in A, j in B)."""
    group_a = _check_group(group_a, snapshot.num_agents)
    group_b = _check_group(group_b, snapshot.num_agents)
    if set(group_a) & set(group_b):
        raise ValueError("groups overlap")
    if dist is None:
        dist = pairwise_distance_matrix(snapshot)
    total = sum(dist[i, j] for i in group_a for j in group_b)
    return float(total / (len(group_a) * len(group_b)))


def aggregate_inter(partition: GroupPartition, snapshot: PolicySnapshot, dist=None) -> float:
    """Unweighted mean of ``snd_inter`` over all unordered group pairs."""
    if partition.num_groups < 2:
        raise ValueError("inter-group diversity needs at least two groups")
    if partition.num_agents != snapshot.num_agents:
        raise ValueError("partition and snapshot disagree on the number of agents")
    if dist is None:
        dist = pairwise_distance_matrix(snapshot)
    groups = partition.groups
    vals = [snd_inter(a, b, snapshot, dist) for a, b in itertools.combinations(groups, 2)]
    return float(np.mean(vals))


def combine_intra(intra_per_group: Sequence[float], group_sizes=None, mode: str = "mean") -> float:
    intra = np.asarray(intra_per_group, dtype=float)
    if mode == "mean":
        return float(intra.mean())
    if mode == "agent_weighted":
        w = np.asarray(group_sizes, dtype=float)
        return float(np.sum(intra * w) / np.sum(w))
    raise ValueError(f"unknown intra aggregation {mode!r}")


def combined_snd(alpha: float, intra_combined: float, inter: float) -> float:
    return alpha * inter + (1.0 - alpha) * intra_combined


def compute_scale(params: DLBCParams, intra_combined: float, inter: float) -> float:
    """Scale that maps the measured combined diversity onto ``params.snd_des``.

    The denominator is floored at ``denom_floor``; the result is clamped to
    ``max_scale``.
    """
    if intra_combined < 0 or inter < 0:
        raise ValueError("diversity measurements must be nonnegative")
    denom = combined_snd(params.alpha, intra_combined, inter)
    scale = params.snd_des / max(denom, params.denom_floor)
    return float(min(scale, params.max_scale))


def measure(
    partition: GroupPartition, snapshot: PolicySnapshot, params: DLBCParams
) -> SNDReport:
    """Measure intra/inter diversity of a snapshot and the scale it implies.

    With a single group there is no inter-group term: ``inter`` is reported
    as 0 and the combined value is the intra diversity alone, whatever alpha
    says. This is the ungrouped fixed-SND baseline.
    """
    dist = pairwise_distance_matrix(snapshot)
    groups = partition.groups
    intra = [snd_intra(g, snapshot, dist) for g in groups]
    inter = aggregate_inter(partition, snapshot, dist) if len(groups) > 1 else 0.0
    intra_c = combine_intra(intra, [len(g) for g in groups], params.intra_aggregation)
    alpha = params.alpha if len(groups) > 1 else 0.0
    combined = combined_snd(alpha, intra_c, inter)
    denom = max(combined, params.denom_floor)
    raw = params.snd_des / denom
    return SNDReport(
        intra_per_group=intra,
        inter=inter,
        combined=combined,
        scale=min(raw, params.max_scale),
        raw_scale=raw,
    )
