"""Single-document JSON configuration shared by every component.

Blocks: dlo (simulator), scene_ranges (randomization), robot (kinematic
and inertial description), plan (optimizer knobs minus the per-trial
goal), gains (controller), trial (benchmark protocol).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .controller import GainConfig
from .dlo import DloConfig
from .robot import RobotModel, default_model

__all__ = ["TrialConfig", "SceneRanges", "Config", "default_config",
           "load_config", "save_config", "config_hash"]


@dataclass
class SceneRanges:
    x_obs: tuple = (0.55, 0.75)
    y_obs: tuple = (-0.2, 0.2)
    theta_obs: tuple = (-0.5, 0.5)
    half_extents: tuple = (0.15, 0.25, 0.25)
    anchor_offset: float = 0.45     # beyond the engine, radially
    anchor_z: float = 0.58
    goal_offset: float = 0.42      # robot side of the engine
    goal_z: float = 0.66
    ground_z: float = 0.0


@dataclass
class TrialConfig:
    step_budget: int = 20
    goal_tol: float = 0.05          # m, per node
    f_lim: float = 15.0             # N, adjudication threshold
    obstacle_prob: float = 0.5      # data-generation scenes with an engine
    q_start: tuple = (0.0, 0.5, 0.0, 0.9, 0.0, 0.7, 0.0)
    q_start_noise: float = 0.2      # rad, data-generation randomization
    settle_time: float = 1.0        # s, pre-trial chain relaxation
    max_tracking_err: float = 0.02  # rad, monitored allowance


@dataclass
class Config:
    dlo: DloConfig = field(default_factory=DloConfig)
    scene_ranges: SceneRanges = field(default_factory=SceneRanges)
    robot: RobotModel = field(default_factory=default_model)
    plan: dict = field(default_factory=dict)    # PlanSpec kwargs minus goal
    gains: GainConfig = field(default_factory=GainConfig)
    trial: TrialConfig = field(default_factory=TrialConfig)


def default_config():
    return Config()


def _to_jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return float(x)
    if isinstance(x, dict):
        return {k: _to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_jsonable(v) for v in x]
    return x


def config_to_dict(cfg):
    out = {}
    for name in ("dlo", "scene_ranges", "robot", "gains", "trial"):
        block = getattr(cfg, name)
        out[name] = _to_jsonable(dataclasses.asdict(block))
    out["plan"] = _to_jsonable(dict(cfg.plan))
    return out


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=1, sort_keys=True)


def _tupled(d, keys):
    return {k: (tuple(v) if k in keys and isinstance(v, list) else v)
            for k, v in d.items()}


def load_config(path):
    with open(path) as fh:
        doc = json.load(fh)
    cfg = Config()
    if "dlo" in doc:
        cfg.dlo = DloConfig(**doc["dlo"])
    if "scene_ranges" in doc:
        cfg.scene_ranges = SceneRanges(**_tupled(
            doc["scene_ranges"],
            {"x_obs", "y_obs", "theta_obs", "half_extents"}))
    if "robot" in doc:
        cfg.robot = RobotModel(**{k: np.asarray(v) if isinstance(v, list) else v
                                  for k, v in doc["robot"].items()})
    if "gains" in doc:
        g = dict(doc["gains"])
        g["lam"] = np.asarray(g["lam"])
        cfg.gains = GainConfig(**g)
    if "trial" in doc:
        cfg.trial = TrialConfig(**_tupled(doc["trial"], {"q_start"}))
    cfg.plan = doc.get("plan", {})
    return cfg


def config_hash(cfg):
    doc = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(doc).hexdigest()
