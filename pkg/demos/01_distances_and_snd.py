# %% [markdown]
# Wasserstein distances between Gaussian policies, and how they roll up into
# intra-group and inter-group diversity numbers.

# %%
import numpy as np

from dlbc import DLBCParams, DiagGaussian, GroupPartition, PolicySnapshot, measure, snd_inter, snd_intra, w2_diag, w2_full

# %%
p = DiagGaussian(mean=[0.0, 0.0], std=[1.0, 0.5])
q = DiagGaussian(mean=[3.0, 4.0], std=[1.0, 0.5])
print("same spread, means 5 apart:", w2_diag(p, q))

q_wide = DiagGaussian(mean=[0.0, 0.0], std=[2.0, 0.5])
print("same mean, one std doubled:", w2_diag(p, q_wide))

# full-covariance form agrees on diagonal inputs
print(w2_full(p.mean, np.diag(p.std**2), q.mean, np.diag(q.std**2)))

# %% [markdown]
# A snapshot holds each agent's action distribution over a batch of
# observations, shape (agents, observations, action_dim).

# %%
rng = np.random.default_rng(0)
n_agents, n_obs = 5, 32
base = rng.normal(size=(1, n_obs, 2))
offsets = np.array([0.0, 0.1, 0.2, 1.0, 1.1])[:, None, None]
snap = PolicySnapshot(means=base + offsets, stds=np.full((n_agents, n_obs, 2), 0.3))

groups = GroupPartition.from_groups([(0, 1, 2), (3, 4)])
print("intra A", snd_intra((0, 1, 2), snap))
print("intra B", snd_intra((3, 4), snap))
print("inter  ", snd_inter((0, 1, 2), (3, 4), snap))

# %%
# alpha weights inter against intra; the scale maps the mix onto snd_des
for alpha in (0.0, 0.5, 1.0):
    rep = measure(groups, snap, DLBCParams(snd_des=0.5, alpha=alpha))
    print(f"alpha={alpha}: combined {rep.combined:.3f} -> scale {rep.scale:.3f}")
