"""Command-line entry points: gen-data, train, plan, benchmark, plot."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..config import default_config, load_config, save_config
from ..dlo import DloState, Scene
from ..geometry import OrientedBox
from ..predictor import PredictorWeights, TrainHyper
from ..robot import JointState


def _load_cfg(path):
    return load_config(path) if path else default_config()


def cmd_gen_data(args):
    from .dataset import gen_dataset

    cfg = _load_cfg(args.config)
    header = gen_dataset(args.out, args.n, args.seed, cfg,
                         log_every=args.log_every)
    print(json.dumps({"out": args.out, "n_traj": header["n_traj"],
                      "frames_per_traj": header["frames_per_traj"],
                      "n_resampled_actions": header["n_resampled_actions"]}))


def cmd_train(args):
    from .bench import train_from_dataset

    cfg = _load_cfg(args.config)
    hyper = TrainHyper(lr=args.lr, patience=args.patience,
                       max_epochs=args.max_epochs, seed=args.seed)
    weights, history = train_from_dataset(args.data, hyper,
                                          out_path=args.out_weights,
                                          config=cfg)
    print(json.dumps({"out": args.out_weights, "eps": weights.eps,
                      "best_epoch": weights.meta["best_epoch"],
                      "epochs_run": weights.meta["epochs_run"],
                      "stopped_early": weights.meta["stopped_early"],
                      "val_epoch0": weights.meta["val_epoch0"],
                      "best_val": weights.meta["best_val"]}))


def _state_from_json(doc, cfg):
    dlo = DloState(np.asarray(doc["dlo"]["nodes"], dtype=float),
                   np.asarray(doc["dlo"]["velocities"], dtype=float),
                   np.asarray(doc["dlo"]["tension_force"], dtype=float))
    sc = doc["scene"]
    obstacle = None
    if sc.get("obstacle"):
        ob = sc["obstacle"]
        obstacle = OrientedBox(center=np.asarray(ob["center"], dtype=float),
                               yaw=float(ob["yaw"]),
                               half=np.asarray(ob["half"], dtype=float))
    scene = Scene(anchor=np.asarray(sc["anchor"], dtype=float),
                  obstacle=obstacle, ground_z=float(sc.get("ground_z", 0.0)))
    js = JointState(np.asarray(doc["q"], dtype=float),
                    np.asarray(doc["qd"], dtype=float))
    goal = np.asarray(doc["goal"], dtype=float)
    return js, dlo, scene, goal


def cmd_plan(args):
    from ..planner import plan
    from .dataset import plan_spec_from_config

    cfg = _load_cfg(args.config)
    weights = PredictorWeights.from_json(args.weights)
    with open(args.state) as fh:
        doc = json.load(fh)
    js, dlo, scene, goal = _state_from_json(doc, cfg)
    spec = plan_spec_from_config(cfg, goal=goal)
    res = plan(js, dlo, scene, weights, spec, cfg.robot,
               np.random.default_rng(args.seed))
    with open(args.out, "w") as fh:
        json.dump(res.to_dict(), fh, indent=1)
    print(json.dumps({"feasible": res.feasible, "cost": res.cost,
                      "wall_time": res.wall_time, "out": args.out}))


def cmd_benchmark(args):
    from .bench import run_benchmark, summarize

    cfg = _load_cfg(args.config)
    weights = PredictorWeights.from_json(args.weights)
    variants = args.variant or ["full"]
    rows, _ = run_benchmark(args.n, args.seed, weights, cfg,
                            variants=variants, out_dir=args.out,
                            workers=args.workers, log_every=args.log_every)
    print(json.dumps(summarize(rows), indent=1))


def cmd_plot(args):
    from .bench import render_plots, summarize
    import csv as csvmod

    cfg = _load_cfg(args.config)
    with open(args.inp) as fh:
        rows = list(csvmod.DictReader(fh))
    render_plots(rows, {}, cfg, args.out)
    print(json.dumps(summarize(rows), indent=1))


def cmd_write_config(args):
    save_config(default_config(), args.out)
    print(json.dumps({"out": args.out}))


def build_parser():
    p = argparse.ArgumentParser(prog="dlosafe",
                                description="certified-safe DLO manipulation stack")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="simulate a training dataset")
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--config", default=None)
    g.add_argument("--log-every", type=int, default=0)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train the shape/tension predictor")
    t.add_argument("--data", required=True)
    t.add_argument("--out-weights", required=True)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--patience", type=int, default=30)
    t.add_argument("--max-epochs", type=int, default=800)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--config", default=None)
    t.set_defaults(fn=cmd_train)

    pl = sub.add_parser("plan", help="one planning call from a state file")
    pl.add_argument("--config", default=None)
    pl.add_argument("--state", required=True)
    pl.add_argument("--weights", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--seed", type=int, default=0)
    pl.set_defaults(fn=cmd_plan)

    b = sub.add_parser("benchmark", help="randomized closed-loop trials")
    b.add_argument("--n", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--config", default=None)
    b.add_argument("--weights", required=True)
    b.add_argument("--variant", action="append",
                   choices=["full", "no-tension", "half-flim"])
    b.add_argument("--out", required=True)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--log-every", type=int, default=0)
    b.set_defaults(fn=cmd_benchmark)

    pt = sub.add_parser("plot", help="re-render plots from a results CSV")
    pt.add_argument("--in", dest="inp", required=True)
    pt.add_argument("--out", required=True)
    pt.add_argument("--config", default=None)
    pt.set_defaults(fn=cmd_plot)

    wc = sub.add_parser("write-config", help="emit the default config JSON")
    wc.add_argument("--out", required=True)
    wc.set_defaults(fn=cmd_write_config)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
