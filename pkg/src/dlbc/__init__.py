"""Dual-level (intra/inter-group) behavioural diversity control for multi-agent PPO."""

from .diversity import (
    DiagGaussian,
    DLBCParams,
    GroupPartition,
    PolicySnapshot,
    SNDReport,
    aggregate_inter,
    compute_scale,
    mean_pairwise_w2,
    measure,
    snd_inter,
    snd_intra,
    w2_diag,
    w2_full,
)
from .env import EnvConfig, PursuitEnv, VecPursuitEnv
from .ippo import TrainConfig, Trainer, assign_groups, compute_gae, refresh_scale

__version__ = "0.1.0"
