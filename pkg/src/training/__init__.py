"""Training loop and optimizers"""

from .optim import Optimizer, clip_grad_norm
from .trainer import TrainResult, init_params, train

__all__ = ["Optimizer", "TrainResult", "clip_grad_norm", "init_params", "train"]
