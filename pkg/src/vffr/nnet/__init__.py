"""Point-cloud regression network on a small reverse-mode autodiff core."""
from vffr.nnet.augment import random_rotation, rotation_matrix
from vffr.nnet.autograd import GraphFreedError, Tensor, mse_loss, no_grad
from vffr.nnet.checkpoint import load_checkpoint, save_checkpoint
from vffr.nnet.model import NetConfig, PointNetRegressor
from vffr.nnet.optim import Adam

__all__ = [
    "Adam", "GraphFreedError", "NetConfig", "PointNetRegressor", "Tensor",
    "load_checkpoint", "mse_loss", "no_grad", "random_rotation", "rotation_matrix",
    "save_checkpoint",
]
