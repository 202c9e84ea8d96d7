"""Experiment orchestration: configs, per-seed runs, metrics CSVs, checkpoints,
summaries, comparisons and sweeps."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .env import TIERS, EnvConfig, PursuitEnv, rollout_trajectory, write_trajectory
from .ippo import METRIC_FIELDS, TrainConfig, Trainer
from .nn import Critic, DLBCActor
from .render import curves_svg, episode_svg

log = logging.getLogger(__name__)

METRICS_VERSION = 1
METRICS_MAGIC = f"# dlbc-metrics v{METRICS_VERSION}"
CHECKPOINT_FORMAT = "dlbc-checkpoint"
CHECKPOINT_VERSION = 1
FINAL_WINDOW = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "5v2"
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs/experiment"
    checkpoint_every: int = 50  # rollouts; 0 disables periodic checkpoints
    record_wall_time: bool = False
    render_final: bool = False
    label: str | None = None

    def __post_init__(self):
        if self.scenario not in TIERS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {sorted(TIERS)}")
        n, m = TIERS[self.scenario]
        if (self.env.num_pursuers, self.env.num_evaders) != (n, m):
            raise ValueError(
                f"scenario {self.scenario} needs {n} pursuers and {m} evaders, "
                f"env config has {self.env.num_pursuers} and {self.env.num_evaders}"
            )
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    @property
    def method(self) -> str:
        return self.train.method

    @property
    def name(self) -> str:
        return self.label or self.method

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "env": self.env.to_dict(),
            "train": self.train.to_dict(),
            "out_dir": self.out_dir,
            "checkpoint_every": self.checkpoint_every,
            "record_wall_time": self.record_wall_time,
            "render_final": self.render_final,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        scenario = d.get("scenario", "5v2")
        if scenario not in TIERS:
            raise ValueError(f"unknown scenario {scenario!r}; expected one of {sorted(TIERS)}")
        n, m = TIERS[scenario]
        env = dict(d.pop("env", {}))
        env.setdefault("num_pursuers", n)
        env.setdefault("num_evaders", m)
        train = d.pop("train", {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(env=EnvConfig(**env), train=TrainConfig.from_dict(train), **d)


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return ExperimentConfig.from_dict(json.load(f))


def dump_json(obj, path) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


# metrics CSV


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_metrics_row(row: dict) -> list[str]:
    return [_fmt(row[k]) for k in METRIC_FIELDS]


class MetricsWriter:
    def __init__(self, path):
        self.path = Path(path)
        self._f = open(self.path, "w", newline="")
        self._f.write(METRICS_MAGIC + "\n")
        self._w = csv.writer(self._f, lineterminator="\n")
        self._w.writerow(METRIC_FIELDS)
        self._last_step = -1

    def write(self, row: dict):
        for k in METRIC_FIELDS:
            vals = row[k] if isinstance(row[k], (list, tuple)) else [row[k]]
            if not all(math.isfinite(float(v)) for v in vals):
                raise FloatingPointError(f"non-finite metric {k}={row[k]!r} at step {row['step']}")
        if row["step"] <= self._last_step:
            raise ValueError("metrics steps must increase")
        self._last_step = row["step"]
        self._w.writerow(format_metrics_row(row))
        self._f.flush()

    def close(self):
        self._f.close()


def read_metrics(path) -> dict[str, np.ndarray | list]:
    """Parse a metrics CSV into columns. ``snd_intra`` is a (rows, groups) array."""
    with open(path, newline="") as f:
        first = f.readline().rstrip("\n")
        if first != METRICS_MAGIC:
            raise ValueError(f"{path}: unsupported metrics format {first!r}, expected {METRICS_MAGIC!r}")
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != METRIC_FIELDS:
            raise ValueError(f"{path}: unexpected metrics columns {header}")
        rows = list(reader)
    cols: dict = {}
    for i, k in enumerate(METRIC_FIELDS):
        if k == "snd_intra":
            cols[k] = np.array([[float(x) for x in r[i].split(";")] for r in rows])
        elif k == "step":
            cols[k] = np.array([int(r[i]) for r in rows])
        else:
            cols[k] = np.array([float(r[i]) for r in rows])
    return cols


def final_window(values: np.ndarray, fraction: float = FINAL_WINDOW) -> np.ndarray:
    n = len(values)
    if n == 0:
        raise ValueError("no metric rows")
    k = max(1, int(math.ceil(fraction * n)))
    return values[-k:]


# checkpoints


def save_checkpoint(path, trainer: Trainer, exp: ExperimentConfig) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "scenario": exp.scenario,
        "method": exp.method,
        "seed": trainer.seed,
        "step": trainer.step,
        "topology": {
            "actor": trainer.actor.topology(),
            "critic": trainer.critic.net.topology(),
        },
        "actor": trainer.actor.state_dict(),
        "critic": trainer.critic.state_dict(),
        "dlbc": asdict(trainer.config.dlbc),
        "groups": trainer.groups.to_dict(),
        "env_config": exp.env.to_dict(),
        "train_config": exp.train.to_dict(),
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    """Returns ``(actor, critic, document)``."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"{path}: checkpoint version {doc.get('version')} is incompatible "
            f"(expected {CHECKPOINT_VERSION})"
        )
    topo = doc["topology"]["actor"]
    rng = np.random.default_rng(0)
    actor = DLBCActor(
        topo["obs_dim"], topo["act_dim"], topo["num_agents"], rng,
        hidden=topo["trunk"]["widths"][1:-1], head_hidden=topo["heads"]["widths"][1:-1],
    )
    actor.load_state_dict(doc["actor"])
    ctopo = doc["topology"]["critic"]
    critic = Critic(ctopo["widths"][0], ctopo["stack"], rng, hidden=ctopo["widths"][1:-1])
    critic.load_state_dict(doc["critic"])
    return actor, critic, doc


def greedy(actor: DLBCActor):
    def policy(obs):
        obs = np.asarray(obs)
        return np.stack([actor.distribution(i, obs[i]).mean for i in range(actor.num_agents)])
    return policy


def evaluate(ckpt_path, episodes: int = 10, seed: int = 0) -> dict:
    """Greedy (mean-action) evaluation of a checkpoint."""
    actor, _, doc = load_checkpoint(ckpt_path)
    env = PursuitEnv(EnvConfig(**doc["env_config"]))
    policy = greedy(actor)
    returns = []
    for k in range(episodes):
        recs = rollout_trajectory(env, policy, seed + k)
        returns.append(np.sum([r["rewards"] for r in recs], axis=0).mean())
    return {"episodes": episodes, "mean_episode_reward": float(np.mean(returns)), "returns": [float(r) for r in returns]}


def render_episode(ckpt_path, seed: int, out_svg, trajectory_out=None) -> Path:
    """Greedy replay of one episode to an animated SVG (and optionally JSON lines)."""
    actor, _, doc = load_checkpoint(ckpt_path)
    cfg = EnvConfig(**doc["env_config"])
    records = rollout_trajectory(PursuitEnv(cfg), greedy(actor), seed)
    if trajectory_out is not None:
        write_trajectory(records, trajectory_out)
    assignment = doc["groups"]["assignment"] + [-1] * cfg.num_evaders
    svg = episode_svg(
        records, cfg.num_pursuers, cfg.radii(), cfg.half_width, assignment,
        title=f"{doc['scenario']} {doc['method']} seed {seed}",
    )
    out_svg = Path(out_svg)
    out_svg.write_text(svg)
    return out_svg


# runs


def run_seed(exp: ExperimentConfig, seed: int, seed_dir: Path) -> dict:
    seed_dir.mkdir(parents=True, exist_ok=True)
    marker = seed_dir / "FAILED"
    if marker.exists():
        marker.unlink()
    trainer = Trainer(exp.env, exp.train, seed, record_wall_time=exp.record_wall_time)
    writer = MetricsWriter(seed_dir / "metrics.csv")
    try:
        for r, row in enumerate(trainer.run(), start=1):
            writer.write(row)
            if exp.checkpoint_every and r % exp.checkpoint_every == 0:
                save_checkpoint(seed_dir / f"checkpoint_{trainer.step:09d}.json", trainer, exp)
    except FloatingPointError as err:
        marker.write_text(f"{type(err).__name__}: {err}\n")
        log.error("seed %d aborted: %s", seed, err)
        return {"seed": seed, "failed": str(err)}
    finally:
        writer.close()
    save_checkpoint(seed_dir / "checkpoint_final.json", trainer, exp)
    if exp.render_final:
        render_episode(seed_dir / "checkpoint_final.json", seed, seed_dir / "episode.svg")
    return seed_summary(seed_dir / "metrics.csv", seed)


def seed_summary(metrics_path, seed: int) -> dict:
    cols = read_metrics(metrics_path)
    return {
        "seed": seed,
        "final_reward": float(final_window(cols["mean_episode_reward"]).mean()),
        "final_snd_inter": float(final_window(cols["snd_inter"]).mean()),
        "final_combined_snd": float(final_window(cols["combined_snd"]).mean()),
        "rows": int(len(cols["step"])),
    }


def run_experiment(exp: ExperimentConfig, seeds=None, out_dir=None) -> Path:
    """Train every seed and write ``summary.json``. Returns the output directory."""
    seeds = tuple(exp.train.seeds if seeds is None else seeds)
    out = Path(out_dir or exp.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create output directory {out}: {err}") from err
    exp = replace(exp, out_dir=str(out), train=replace(exp.train, seeds=seeds))
    dump_json(exp.to_dict(), out / "config.json")
    per_seed = []
    for seed in seeds:
        seed_dir = out / f"seed_{seed}"
        log.info("training %s %s seed %d -> %s", exp.scenario, exp.name, seed, seed_dir)
        summary = run_seed(exp, seed, seed_dir)
        dump_json(exp.to_dict() | {"seed": seed}, seed_dir / "config.json")
        per_seed.append(summary)
    dump_json(summarize(exp, per_seed), out / "summary.json")
    return out


def summarize(exp: ExperimentConfig, per_seed: list[dict]) -> dict:
    ok = [s for s in per_seed if "failed" not in s]
    rewards = np.array([s["final_reward"] for s in ok])
    inter = np.array([s["final_snd_inter"] for s in ok])
    return {
        "scenario": exp.scenario,
        "method": exp.method,
        "label": exp.name,
        "snd_des": exp.train.dlbc.snd_des,
        "alpha": exp.train.dlbc.alpha,
        "seeds": per_seed,
        "final_reward_mean": float(rewards.mean()) if len(ok) else None,
        "final_reward_std": float(rewards.std()) if len(ok) else None,
        "final_snd_inter_mean": float(inter.mean()) if len(ok) else None,
        "failed_seeds": [s["seed"] for s in per_seed if "failed" in s],
    }


# comparison


def load_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise FileNotFoundError(f"{run_dir}: missing config.json")
    cfg = json.loads(cfg_path.read_text())
    seeds = {}
    for sd in sorted(run_dir.glob("seed_*")):
        m = sd / "metrics.csv"
        if m.exists() and not (sd / "FAILED").exists():
            seeds[int(sd.name.split("_", 1)[1])] = read_metrics(m)
    if not seeds:
        raise ValueError(f"{run_dir}: no complete seed metrics")
    label = cfg.get("label") or cfg["train"]["method"]
    return {"dir": str(run_dir), "scenario": cfg["scenario"], "label": label, "config": cfg, "seeds": seeds}


def comparison_table(runs: list[dict]) -> list[dict]:
    rows = []
    for run in runs:
        per_seed_r = [float(final_window(c["mean_episode_reward"]).mean()) for c in run["seeds"].values()]
        per_seed_i = [float(final_window(c["snd_inter"]).mean()) for c in run["seeds"].values()]
        rows.append({
            "label": run["label"],
            "dir": run["dir"],
            "seeds": len(per_seed_r),
            "final_reward_mean": float(np.mean(per_seed_r)),
            "final_reward_std": float(np.std(per_seed_r)),
            "final_snd_inter_mean": float(np.mean(per_seed_i)),
        })
    return rows


def format_table(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"{'run':<28} {'seeds':>5} {'final reward':>20} {'SND_inter':>10}\n")
    for r in rows:
        reward = f"{r['final_reward_mean']:.3f} +/- {r['final_reward_std']:.3f}"
        buf.write(f"{r['label']:<28} {r['seeds']:>5} {reward:>20} {r['final_snd_inter_mean']:>10.4f}\n")
    return buf.getvalue()


def _aggregate_curve(run: dict, key: str) -> dict:
    cols = list(run["seeds"].values())
    n = min(len(c["step"]) for c in cols)
    vals = np.array([c[key][:n] for c in cols])
    return {
        "label": run["label"],
        "x": cols[0]["step"][:n],
        "mean": vals.mean(axis=0),
        "std": vals.std(axis=0) if len(cols) > 1 else None,
    }


def plot_and_compare(run_dirs, out_svg=None) -> tuple[str, list[dict]]:
    """Overlay reward and SND_inter curves across runs; returns (table text, rows)."""
    runs = [load_run(d) for d in run_dirs]
    if not runs:
        raise ValueError("need at least one run directory")
    tiers = {r["scenario"] for r in runs}
    if len(tiers) > 1:
        raise ValueError(f"runs cover different scenario tiers {sorted(tiers)}; not comparable")
    rows = comparison_table(runs)
    if out_svg is not None:
        tier = runs[0]["scenario"]
        panels = [
            {"title": f"{tier}: mean pursuer episode reward", "ylabel": "reward",
             "series": [_aggregate_curve(r, "mean_episode_reward") for r in runs]},
            {"title": f"{tier}: inter-group SND", "ylabel": "SND_inter",
             "series": [_aggregate_curve(r, "snd_inter") for r in runs]},
        ]
        Path(out_svg).write_text(curves_svg(panels))
    return format_table(rows), rows


def sweep(exp: ExperimentConfig, alphas, snd_des_values, seeds=None, out_dir=None) -> tuple[str, list[dict]]:
    """Grid over alpha and target diversity; one experiment directory per point."""
    out = Path(out_dir or exp.out_dir)
    dirs = []
    for a, s in itertools.product(alphas, snd_des_values):
        params = replace(exp.train.dlbc, alpha=float(a), snd_des=float(s))
        point = replace(
            exp, train=replace(exp.train, dlbc=params),
            label=f"{exp.method}_a{a:g}_snd{s:g}",
        )
        dirs.append(run_experiment(point, seeds=seeds, out_dir=out / f"alpha_{a:g}_snd_{s:g}"))
    text, rows = plot_and_compare(dirs, out / "sweep.svg")
    dump_json(rows, out / "sweep.json")
    return text, rows

