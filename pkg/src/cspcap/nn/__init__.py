"""Minimal numpy neural-network engine with exact backward passes."""

from .functional import Adam, adam_step, grad_check, relative_error, softmax, softmax_xent
from .layers import BatchNorm, Conv1D, Dense, GlobalAvgPool1D, Layer, MaxPool1D, ReLU, Sequential

__all__ = [
    "Adam", "BatchNorm", "Conv1D", "Dense", "GlobalAvgPool1D", "Layer", "MaxPool1D", "ReLU",
    "Sequential", "adam_step", "grad_check", "relative_error", "softmax", "softmax_xent",
]
