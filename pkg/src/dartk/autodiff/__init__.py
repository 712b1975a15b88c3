"""Minimal reverse-mode autodiff over dense arrays, sized for the DAR network."""
from .kernels import backend_name
from .ops import BatchNormState, add, batchnorm1d, conv1d, l1_loss, mul, relu, sum, tanh
from .optim import Adam, AdamState, adam_step
from .tensor import Tape, Tensor, backward

__all__ = [
    "Adam", "AdamState", "BatchNormState", "Tape", "Tensor", "adam_step", "add",
    "backend_name", "backward", "batchnorm1d", "conv1d", "l1_loss", "mul", "relu",
    "sum", "tanh",
]
