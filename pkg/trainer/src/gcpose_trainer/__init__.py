"""Training side of the pose-solver toolkit.

Trains the pointwise-convolution pose regressors on synthetic datasets
produced by the solver package's `gcpose synth` command and exports weight
files (batch normalization folded) in the portable format the solver
package executes with its own forward pass.
"""

from .data import PoseDataset, load_dataset, split
from .export import eval_forward, export_weights
from .losses import UncertaintyWeightedLoss, uncertainty_weighted_sum
from .model import PoseRegressor
from .train import TrainConfig, TrainReport, train, train_and_export

__all__ = [
    "PoseDataset",
    "load_dataset",
    "split",
    "export_weights",
    "eval_forward",
    "UncertaintyWeightedLoss",
    "uncertainty_weighted_sum",
    "PoseRegressor",
    "TrainConfig",
    "TrainReport",
    "train",
    "train_and_export",
]
