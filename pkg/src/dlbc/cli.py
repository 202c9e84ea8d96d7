"""Command-line entry point: ``python -m dlbc <command>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _load(path):
    return harness.load_config(path) if path else harness.ExperimentConfig()


def cmd_train(args):
    exp = _load(args.config)
    out = harness.run_experiment(exp, seeds=args.seeds, out_dir=args.out)
    print(json.dumps(json.loads((out / "summary.json").read_text()), indent=2))


def cmd_eval(args):
    print(json.dumps(harness.evaluate(args.ckpt, episodes=args.episodes, seed=args.seed), indent=2))


def cmd_render(args):
    path = harness.render_episode(args.ckpt, args.seed, args.out, trajectory_out=args.trajectory)
    print(path)


def cmd_plot(args):
    table, _ = harness.plot_and_compare(args.runs, out_svg=args.out)
    print(table, end="")


def cmd_compare(args):
    table, rows = harness.plot_and_compare(args.runs)
    print(json.dumps(rows, indent=2) if args.json else table, end="\n" if args.json else "")


def cmd_sweep(args):
    exp = _load(args.config)
    table, _ = harness.sweep(exp, args.alpha, args.snd_des, seeds=args.seeds, out_dir=args.out)
    print(table, end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dlbc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one method over one or more seeds")
    t.add_argument("--config", help="experiment config JSON (defaults if omitted)")
    t.add_argument("--seeds", type=_ints, help="comma-separated seeds, overrides the config")
    t.add_argument("--out", help="output directory, overrides the config")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", help="render one greedy episode to animated SVG")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.add_argument("--trajectory", help="also dump the trajectory as JSON lines")
    r.set_defaults(func=cmd_render)

    pl = sub.add_parser("plot", help="reward / SND_inter curves for runs of one tier")
    pl.add_argument("runs", nargs="+")
    pl.add_argument("--out", required=True, help="SVG output path")
    pl.set_defaults(func=cmd_plot)

    c = sub.add_parser("compare", help="final-window comparison table")
    c.add_argument("runs", nargs="+")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", help="grid over alpha and SND_des")
    s.add_argument("--config")
    s.add_argument("--alpha", type=_floats, required=True)
    s.add_argument("--snd-des", type=_floats, required=True)
    s.add_argument("--seeds", type=_ints)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0
