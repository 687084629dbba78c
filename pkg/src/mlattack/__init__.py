"""Evasion attackability of multi-label classifiers.

Targeted minimal-norm attacks, greedy label-space exploration (GASE) with its
baselines, exhaustive oracles at small label counts, attackability risk
bounds, and nuclear-norm / adversarial training countermeasures.
"""

__version__ = "0.1.0"

from .attack import AttackOutcome, AttackSpec, linear_targeted_exact, loss_ascent, targeted_attack
from .dataset import Dataset, load_sparse, normalize, save_sparse, split, synthesize
from .explore import ExplorationResult, gase, indicator, ls_search, os_search, pgs, rs
from .model import LinearModel, MlpModel, init_mlp, predict, score_grad, scores

__all__ = [
    "AttackOutcome", "AttackSpec", "Dataset", "ExplorationResult", "LinearModel", "MlpModel",
    "gase", "indicator", "init_mlp", "linear_targeted_exact", "load_sparse", "loss_ascent",
    "ls_search", "normalize", "os_search", "pgs", "predict", "rs", "save_sparse", "score_grad",
    "scores", "split", "synthesize", "targeted_attack",
]
