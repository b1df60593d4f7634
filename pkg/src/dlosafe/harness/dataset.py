"""Trajectory dataset generation and the binary frame store.

Layout (little-endian float32), one fixed-size record per frame:

    nodes     3*(N+1)   node positions, meters
    grip      3         commanded end position (equals node 0)
    force     3         tension force on the held end, newtons
    obstacle  4         (x, y, yaw, present)

frames.bin holds n_traj * frames_per_traj consecutive records;
header.json documents shapes, rates, units, and the config hash;
splits.json lists the train/validation/test trajectory indices.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from ..config import config_hash
from ..dlo import SimulationFault, rollout
from ..planner import PlanSpec, desired_traj
from ..predictor import SeqBatch
from ..robot import forward_kinematics
from .scenes import gen_trial_scene, settled_start

__all__ = ["gen_dataset", "load_dataset", "make_windows", "dataset_hash",
           "plan_spec_from_config"]

DATASET_VERSION = 1


def plan_spec_from_config(config, goal):
    kw = dict(config.plan)
    kw.setdefault("k_max", np.full(config.robot.n_q, np.pi / 6))
    return PlanSpec(goal=goal, **kw)


def _record_len(n_nodes):
    return 3 * n_nodes + 3 + 3 + 4


def _action_grips(model, spec, q0, k, dt_rec):
    """End-effector waypoints of one parameterized action at the record rate."""
    n = int(round(spec.t_fin / dt_rec))
    grips = np.empty((n, 3))
    for i in range(1, n + 1):
        q, _, _ = desired_traj(k, i * dt_rec, q0, np.zeros_like(q0), spec)
        grips[i - 1] = forward_kinematics(model, q)[2]
    q_end, _, _ = desired_traj(k, spec.t_fin, q0, np.zeros_like(q0), spec)
    return grips, q_end


def gen_dataset(out_dir, n_traj, seed, config, duration=2.0, log_every=0):
    """Simulate n_traj random manipulation trajectories and store frames.

    Each trajectory: random scene (obstacle with configured probability),
    random start pose, chained random trajectory-family actions from
    rest, recorded at the control rate.  Deterministic per seed.
    """
    os.makedirs(out_dir, exist_ok=True)
    dlo = config.dlo
    model = config.robot
    spec = plan_spec_from_config(config, goal=np.zeros((dlo.n_nodes, 3)))
    dt_rec = dlo.dt_control
    frames_per_traj = int(round(duration / dt_rec))
    n_actions = int(round(duration / spec.t_fin))
    rec_len = _record_len(dlo.n_nodes)

    ss = np.random.SeedSequence(seed)
    child_seeds = ss.spawn(n_traj)
    data = np.zeros((n_traj, frames_per_traj, rec_len), dtype="<f4")
    n_resampled = 0

    for ti in range(n_traj):
        rng = np.random.default_rng(child_seeds[ti])
        with_obstacle = bool(rng.random() < config.trial.obstacle_prob)
        scene, q_base, _ = gen_trial_scene(rng, config, with_obstacle)

        q0 = None
        for _ in range(10):
            cand = q_base + rng.uniform(-config.trial.q_start_noise,
                                        config.trial.q_start_noise,
                                        size=model.n_q)
            ee = forward_kinematics(model, cand)[2]
            chord = np.linalg.norm(scene.anchor - ee)
            if 0.3 * dlo.length < chord < 0.9 * dlo.length and ee[2] > 0.25:
                q0 = cand
                break
        if q0 is None:
            q0 = q_base.copy()

        state0 = settled_start(q0, scene, config)
        frames = None
        for attempt in range(8):
            ks = [rng.uniform(-1.0, 1.0, model.n_q) * spec.k_max
                  for _ in range(n_actions)]
            if attempt == 7:
                ks = [np.zeros(model.n_q) for _ in range(n_actions)]
            grips = []
            q_cur = q0
            for k in ks:
                g, q_cur = _action_grips(model, spec, q_cur, k, dt_rec)
                grips.append(g)
            grips = np.vstack(grips)[:frames_per_traj]
            try:
                frames = rollout(state0.copy(), grips, scene, dlo)
                break
            except SimulationFault:
                n_resampled += 1
        if frames is None:
            raise SimulationFault(f"trajectory {ti} unstable even at rest")

        obs = scene.obstacle
        obs_rec = (np.array([obs.center[0], obs.center[1], obs.yaw, 1.0])
                   if obs is not None else np.zeros(4))
        for fi, (g, st) in enumerate(zip(grips, frames)):
            rec = np.concatenate([st.nodes.ravel(), g, st.tension_force, obs_rec])
            data[ti, fi] = rec.astype("<f4")
        if log_every and (ti + 1) % log_every == 0:
            print(f"[gen-data] {ti + 1}/{n_traj} trajectories")

    data.tofile(os.path.join(out_dir, "frames.bin"))

    header = {
        "version": DATASET_VERSION,
        "config_hash": config_hash(config),
        "units": {"position": "m", "force": "N", "time": "s"},
        "n_nodes": dlo.n_nodes,
        "n_traj": n_traj,
        "frames_per_traj": frames_per_traj,
        "record_len": rec_len,
        "record_fields": ["nodes", "grip", "force", "obstacle_pose"],
        "dt_record": dt_rec,
        "duration": duration,
        "seed": seed,
        "n_resampled_actions": n_resampled,
        "obstacle_half_extents": list(config.scene_ranges.half_extents),
        "ground_z": config.scene_ranges.ground_z,
    }
    with open(os.path.join(out_dir, "header.json"), "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)

    rng = np.random.default_rng(seed)
    order = rng.permutation(n_traj)
    n_train = int(round(0.75 * n_traj))
    n_val = int(round(0.15 * n_traj))
    splits = {
        "train": sorted(int(i) for i in order[:n_train]),
        "val": sorted(int(i) for i in order[n_train:n_train + n_val]),
        "test": sorted(int(i) for i in order[n_train + n_val:]),
    }
    with open(os.path.join(out_dir, "splits.json"), "w") as fh:
        json.dump(splits, fh)
    return header


class Dataset:
    def __init__(self, root, header, frames, splits):
        self.root = root
        self.header = header
        self.frames = frames           # (n_traj, T, rec_len) memmap
        self.splits = splits

    @property
    def n_nodes(self):
        return self.header["n_nodes"]

    def nodes(self, ti, fi):
        n = self.n_nodes
        return np.asarray(self.frames[ti, fi, :3 * n], dtype=float).reshape(n, 3)

    def grip(self, ti, fi):
        n = 3 * self.n_nodes
        return np.asarray(self.frames[ti, fi, n:n + 3], dtype=float)

    def force(self, ti, fi):
        n = 3 * self.n_nodes
        return np.asarray(self.frames[ti, fi, n + 3:n + 6], dtype=float)


def load_dataset(root):
    with open(os.path.join(root, "header.json")) as fh:
        header = json.load(fh)
    if header.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {header.get('version')}")
    shape = (header["n_traj"], header["frames_per_traj"], header["record_len"])
    frames = np.memmap(os.path.join(root, "frames.bin"), dtype="<f4",
                       mode="r", shape=shape)
    with open(os.path.join(root, "splits.json")) as fh:
        splits = json.load(fh)
    return Dataset(root, header, frames, splits)


def dataset_hash(root):
    h = hashlib.sha256()
    with open(os.path.join(root, "header.json"), "rb") as fh:
        h.update(fh.read())
    with open(os.path.join(root, "frames.bin"), "rb") as fh:
        while True:
            chunk = fh.read(1 << 22)
            if not chunk:
                break
            h.update(chunk)
    return h.hexdigest()


def make_windows(ds, split, config, offsets=(0, 4, 9)):
    """Planner-horizon training windows from recorded trajectories.

    Frames are subsampled to the planning stamp spacing; the window start
    state carries backward-difference velocities (matching what the
    executor feeds the predictor at run time), and all positions are
    anchor-normalized.
    """
    spec = plan_spec_from_config(config, goal=np.zeros((ds.n_nodes, 3)))
    sub = int(round(spec.dt / ds.header["dt_record"]))
    n_steps = spec.n_t
    T = ds.header["frames_per_traj"]
    n = ds.n_nodes
    dt_rec = ds.header["dt_record"]

    idx = ds.splits[split]
    x0s, grips, shapes, forces = [], [], [], []
    for ti in idx:
        traj = np.asarray(ds.frames[ti], dtype=float)
        nodes = traj[:, :3 * n].reshape(T, n, 3)
        force = traj[:, 3 * n + 3:3 * n + 6]
        anchor = nodes[0, -1]
        for o in offsets:
            start = o * sub
            stamps = start + sub * np.arange(1, n_steps + 1)
            if stamps[-1] >= T:
                continue
            prev = max(start - 1, 0)
            vel = (nodes[start] - nodes[prev]) / dt_rec if start > 0 \
                else np.zeros((n, 3))
            x0 = np.concatenate([(nodes[start] - anchor).ravel(), vel.ravel()])
            x0s.append(x0)
            grips.append(nodes[stamps, 0] - anchor)
            shapes.append((nodes[stamps] - anchor).reshape(n_steps, 3 * n))
            forces.append(force[stamps])
    return SeqBatch(np.array(x0s), np.array(grips),
                    np.array(shapes), np.array(forces))
