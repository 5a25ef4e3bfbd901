"""Task-gated feedforward classifier toolkit.

Externally cued gating of hidden neurons (g = a * sigmoid(b)) on top of a
from-scratch MLP: CIFAR-10 pipeline, two-phase training, categorical
isolation metric, binary checkpoints, and a CLI.
"""

__version__ = "0.1.0"

from .data import Taxonomy, default_taxonomy
from .evaluation import MetricsReport, categorical_isolation, confusion_matrix, evaluate
from .ndcore import RngStream
from .nn import BaseParams, GateBank, MlpConfig, forward, predict
from .optim import finite_diff_check, nll_loss
from .train import TrainSchedule, train_base, train_gates, validate

__all__ = [
    "Taxonomy",
    "default_taxonomy",
    "MetricsReport",
    "categorical_isolation",
    "confusion_matrix",
    "evaluate",
    "RngStream",
    "BaseParams",
    "GateBank",
    "MlpConfig",
    "forward",
    "predict",
    "finite_diff_check",
    "nll_loss",
    "TrainSchedule",
    "train_base",
    "train_gates",
    "validate",
]
