# %% [markdown]
# A short 5v2 training run for both controllers, then a side by side table,
# curves and a replay. Budget here is tiny; bump total_steps for real runs.

# %%
from dataclasses import replace
from pathlib import Path

from dlbc import DLBCParams, EnvConfig, TrainConfig
from dlbc import harness

out = Path("runs/demo")
train = TrainConfig(num_envs=8, total_steps=24_000, seeds=(0, 1), dlbc=DLBCParams(snd_des=0.3, alpha=0.5))
exp = harness.ExperimentConfig(scenario="5v2", env=EnvConfig(), train=train, checkpoint_every=0)

ours = harness.run_experiment(exp, out_dir=out / "dlbc")
base = harness.run_experiment(
    replace(exp, train=replace(train, method="fixed_snd_baseline")), out_dir=out / "baseline"
)

# %%
table, rows = harness.plot_and_compare([ours, base], out / "curves.svg")
print(table)

# %%
ckpt = ours / "seed_0" / "checkpoint_final.json"
print(harness.evaluate(ckpt, episodes=5))
harness.render_episode(ckpt, seed=0, out_svg=out / "episode.svg", trajectory_out=out / "episode.jsonl")
print("wrote", out / "curves.svg", "and", out / "episode.svg")
