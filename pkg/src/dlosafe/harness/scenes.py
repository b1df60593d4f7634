"""Randomized scene, start-state, and goal construction.

The engine box is dropped at a random pose in front of the arm, the far
chain end anchors beyond it, and the goal drapes the chain midsection
over the engine top.  Goals come from the simulator itself (a settled
state with the held end at the goal grip), so every goal is physically
attainable.
"""

from __future__ import annotations

import numpy as np

from ..dlo import Scene, init_straight, settle, signed_distance
from ..geometry import OrientedBox
from ..robot import forward_kinematics

__all__ = ["gen_trial_scene", "gen_goal_state", "settled_start"]


def _unit_xy(v):
    n = np.linalg.norm(v[:2])
    return np.array([v[0] / n, v[1] / n, 0.0])


def gen_trial_scene(rng, config, with_obstacle=True):
    """Random engine pose plus a geometry-consistent anchor and goal grip.

    Returns (scene, q_start, goal_grip).  The anchor is pulled toward the
    gripped end until the initial chord leaves slack, and raised until
    the settled chain clears the obstacle.
    """
    sr = config.scene_ranges
    model = config.robot
    dlo = config.dlo
    q_start = np.asarray(config.trial.q_start, dtype=float)
    ee = forward_kinematics(model, q_start)[2]

    x_o = rng.uniform(*sr.x_obs)
    y_o = rng.uniform(*sr.y_obs)
    th = rng.uniform(*sr.theta_obs)
    half = np.asarray(sr.half_extents, dtype=float)
    center = np.array([x_o, y_o, sr.ground_z + half[2]])
    obstacle = OrientedBox(center=center, yaw=th, half=half) if with_obstacle else None

    radial = _unit_xy(center)
    anchor = center + radial * sr.anchor_offset
    anchor[2] = sr.anchor_z
    goal_grip = center - radial * sr.goal_offset
    goal_grip[2] = sr.goal_z

    # leave slack on the starting chord
    for _ in range(12):
        if np.linalg.norm(anchor - ee) <= 0.90 * dlo.length:
            break
        anchor = anchor + 0.03 * (ee - anchor) / np.linalg.norm(ee - anchor)
    scene = Scene(anchor=anchor, obstacle=obstacle, ground_z=sr.ground_z)

    if with_obstacle:
        for _ in range(6):
            state = settled_start(q_start, scene, config)
            if signed_distance(state.nodes, scene).min() > 0.01:
                break
            anchor = anchor + np.array([0.0, 0.0, 0.05])
            scene = Scene(anchor=anchor, obstacle=obstacle, ground_z=sr.ground_z)
    return scene, q_start, goal_grip


def settled_start(q_start, scene, config):
    """Chain draped from the gripper to the anchor, relaxed to rest."""
    ee = forward_kinematics(config.robot, q_start)[2]
    state = init_straight(ee, scene.anchor, config.dlo, slack=True)
    return settle(state, scene, config.dlo, duration=config.trial.settle_time)


def _polyline_points(waypoints, arclens):
    segs = np.diff(waypoints, axis=0)
    seg_len = np.linalg.norm(segs, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    out = np.empty((len(arclens), 3))
    for i, s in enumerate(arclens):
        s = min(max(s, 0.0), cum[-1])
        j = int(np.searchsorted(cum[1:], s, side="left"))
        j = min(j, len(segs) - 1)
        frac = (s - cum[j]) / seg_len[j]
        out[i] = waypoints[j] + frac * segs[j]
    return out


def gen_goal_state(scene, goal_grip, config):
    """Desired node layout: the chain draped over the engine top with the
    held end at goal_grip, produced by settling the simulator there.

    Returns (goal_state, goal_grip): the grip may be pulled toward the
    engine to keep the over-the-top path within the chain length.
    """
    dlo = config.dlo
    goal_grip = np.asarray(goal_grip, dtype=float).copy()
    if scene.obstacle is not None:
        top = scene.obstacle.center + np.array([0.0, 0.0,
                                                scene.obstacle.half[2] + 0.04])
    else:
        top = 0.5 * (goal_grip + scene.anchor)

    for _ in range(20):
        path = (np.linalg.norm(top - goal_grip)
                + np.linalg.norm(scene.anchor - top))
        if path <= 0.95 * dlo.length:
            break
        goal_grip = goal_grip + 0.05 * (top - goal_grip)

    waypoints = np.array([goal_grip, top, scene.anchor])
    nodes = _polyline_points(waypoints, np.linspace(0.0, path, dlo.n_nodes))
    nodes[0] = goal_grip
    nodes[-1] = scene.anchor

    from ..dlo import DloState, settle as settle_fn
    state = DloState(nodes, np.zeros_like(nodes), np.zeros(3))
    goal = settle_fn(state, scene, dlo, duration=2.0)
    return goal, goal_grip
