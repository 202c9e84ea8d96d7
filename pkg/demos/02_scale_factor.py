# %% [markdown]
# The actor adds a scaled per-agent head to a shared trunk. Because the heads
# enter linearly, every diversity measure is proportional to the scale, so one
# measurement at scale 1 is enough to hit any target exactly.

# %%
import numpy as np

from dlbc import DLBCParams, EnvConfig, PursuitEnv, assign_groups, measure, refresh_scale
from dlbc.nn import DLBCActor

cfg = EnvConfig.tier("7v2")
rng = np.random.default_rng(3)
actor = DLBCActor(cfg.obs_dim, 2, cfg.num_pursuers, rng)

# freshly built heads are zero, so every agent acts like the trunk
_, obs = PursuitEnv(cfg).reset(0)
print(measure(assign_groups(7, 2), actor.snapshot(obs, scale=1.0), DLBCParams()).combined)

# %%
# pretend training has moved the heads
for p in actor.heads.parameters():
    p.data = p.data + rng.normal(scale=0.2, size=p.shape)

sample = np.concatenate([PursuitEnv(cfg).reset(s)[1] for s in range(20)])
groups = assign_groups(7, 2)

for s in (0.5, 1.0, 2.0):
    rep = measure(groups, actor.snapshot(sample, scale=s), DLBCParams())
    print(f"scale {s}: intra {np.round(rep.intra_per_group, 4)} inter {rep.inter:.4f}")

# %%
params = DLBCParams(snd_des=0.8, alpha=0.5)
refresh_scale(actor, groups, sample, params)
after = measure(groups, actor.snapshot(sample), params)
print("installed scale", actor.scale)
print("combined after refresh", after.combined, "target", params.snd_des)

# %%
# same target, different emphasis
for alpha in (0.0, 0.25, 0.75, 1.0):
    p = DLBCParams(snd_des=0.8, alpha=alpha)
    refresh_scale(actor, groups, sample, p)
    rep = measure(groups, actor.snapshot(sample), p)
    print(f"alpha {alpha}: intra mean {np.mean(rep.intra_per_group):.3f}, inter {rep.inter:.3f}")
