"""Benchmark orchestration: N randomized trials per variant, CSV and
telemetry emission, plots, and the training driver glue."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from multiprocessing import get_context

import numpy as np

from ..predictor import PredictorWeights, estimate_eps, train
from .dataset import dataset_hash, load_dataset, make_windows
from .trial import VARIANTS, Outcome, run_trial

__all__ = ["run_benchmark", "train_from_dataset", "csv_hash", "render_plots",
           "summarize"]

CSV_FIELDS = ["variant", "trial", "seed", "outcome", "steps", "max_tension",
              "min_fo_margin", "n_residual_excursions", "n_plans",
              "n_infeasible", "braking_used", "max_plan_wall",
              "frac_plans_in_budget", "max_tracking_err", "fault"]


def _trial_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _run_one(args):
    idx, trial_seed, weights, config, variant = args
    out = run_trial(trial_seed, weights, config, variant=variant)
    return idx, trial_seed, out


def _row(variant, idx, trial_seed, out, t_plan):
    walls = out.plan_walls or [0.0]
    in_budget = float(np.mean([w <= t_plan for w in walls]))
    return {
        "variant": variant,
        "trial": idx,
        "seed": trial_seed,
        "outcome": out.category,
        "steps": out.steps_used,
        "max_tension": f"{out.max_tension:.6f}",
        "min_fo_margin": f"{out.min_fo_margin:.6f}",
        "n_residual_excursions": out.n_residual_excursions,
        "n_plans": len(out.plan_walls),
        "n_infeasible": int(sum(not f for f in out.plan_feasible)),
        "braking_used": int(out.braking_used),
        "max_plan_wall": f"{max(walls):.4f}",
        "frac_plans_in_budget": f"{in_budget:.4f}",
        "max_tracking_err": f"{out.max_tracking_err:.6f}",
        "fault": int(out.fault),
    }


def run_benchmark(n, seed, weights, config, variants=("full",), out_dir=None,
                  workers=1, log_every=0):
    """Run n trials for each variant; returns (rows, outcomes dict).

    Deterministic in (n, seed, config, weights, variants): trial seeds
    come from one spawning sequence and rows are ordered by (variant,
    trial index) regardless of worker scheduling.
    """
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    seeds = _trial_seeds(seed, n)
    t_plan = config.plan.get("t_plan", 0.5)

    rows = []
    outcomes = {v: [] for v in variants}
    for variant in variants:
        jobs = [(i, seeds[i], weights, config, variant) for i in range(n)]
        if workers > 1:
            with get_context("spawn").Pool(workers) as pool:
                results = pool.map(_run_one, jobs)
        else:
            results = []
            for j in jobs:
                results.append(_run_one(j))
                if log_every and (j[0] + 1) % log_every == 0:
                    print(f"[benchmark] {variant}: {j[0] + 1}/{n}")
        results.sort(key=lambda r: r[0])
        for idx, trial_seed, out in results:
            rows.append(_row(variant, idx, trial_seed, out, t_plan))
            outcomes[variant].append(out)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(rows, os.path.join(out_dir, "results.csv"))
        tele_dir = os.path.join(out_dir, "telemetry")
        os.makedirs(tele_dir, exist_ok=True)
        for variant in variants:
            for idx, out in enumerate(outcomes[variant]):
                path = os.path.join(tele_dir, f"{variant}_{idx:03d}.json")
                with open(path, "w") as fh:
                    json.dump(out.to_dict(), fh)
        render_plots(rows, outcomes, config, out_dir)
    return rows, outcomes


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in rows:
            writer.writerow(r)


def csv_hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def summarize(rows):
    """Outcome counts per variant (the benchmark results table)."""
    table = {}
    for r in rows:
        table.setdefault(r["variant"], {})
        table[r["variant"]][r["outcome"]] = \
            table[r["variant"]].get(r["outcome"], 0) + 1
    return table


def render_plots(rows, outcomes, config, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    f_lim = config.trial.f_lim
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for variant, outs in outcomes.items():
        for out in outs:
            trace = out.tension_trace
            if trace:
                ax.plot(np.arange(len(trace)) * config.dlo.dt_control,
                        trace, alpha=0.25, lw=0.6)
    ax.axhline(f_lim, color="red", ls="--", label=f"f_lim = {f_lim} N")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("tension [N]")
    ax.set_title("simulator tension traces")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "tension_traces.svg"))
    plt.close(fig)

    table = summarize(rows)
    cats = ["GoalReached", "FailedWithoutViolation", "RobotCollision",
            "DloOverextension"]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    width = 0.8 / max(len(table), 1)
    for vi, (variant, counts) in enumerate(sorted(table.items())):
        xs = np.arange(len(cats)) + vi * width
        ax.bar(xs, [counts.get(c, 0) for c in cats], width=width,
               label=variant)
    ax.set_xticks(np.arange(len(cats)) + 0.4 - width / 2)
    ax.set_xticklabels(cats, rotation=12)
    ax.set_ylabel("trials")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "outcomes.svg"))
    plt.close(fig)


def train_from_dataset(data_dir, hyper, out_path=None, offsets=(0, 4, 9),
                       config=None):
    """Dataset -> windows -> training -> certified residual bound."""
    from ..config import default_config

    ds = load_dataset(data_dir)
    config = config or default_config()
    tr = make_windows(ds, "train", config, offsets)
    va = make_windows(ds, "val", config, offsets)
    te = make_windows(ds, "test", config, offsets)
    weights, history = train(tr, va, hyper)
    weights.eps = estimate_eps(weights, te)
    weights.meta["dataset_hash"] = dataset_hash(data_dir)
    weights.meta["n_windows"] = {"train": tr.size, "val": va.size,
                                 "test": te.size}
    shapes, forces = _test_metrics(weights, te)
    weights.meta["test_shape_mae"] = shapes
    weights.meta["test_force_mae"] = forces
    if out_path is not None:
        weights.to_json(out_path)
    return weights, history


def _test_metrics(weights, batch):
    from ..predictor import _cell_sequence
    shapes, forces, _ = _cell_sequence(weights.arrays, batch.x0, batch.grips)
    shape_mae = float(np.abs(shapes - batch.shapes).mean())
    force_mae = float(np.abs(weights.f_scale * forces - batch.forces).mean())
    return shape_mae, force_mae
