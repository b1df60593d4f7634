from .dataset import dataset_hash, gen_dataset, load_dataset, make_windows
from .scenes import gen_goal_state, gen_trial_scene
from .trial import Outcome, run_trial
from .bench import run_benchmark

__all__ = ["gen_dataset", "load_dataset", "make_windows", "dataset_hash",
           "gen_trial_scene", "gen_goal_state", "Outcome", "run_trial",
           "run_benchmark"]
