"""Learned graph augmentations for contrastive representation learning."""

from .tensor import Tensor, ParameterSet, xavier_init, finite_diff_grad
from .rng import RngStream

__all__ = ["Tensor", "ParameterSet", "xavier_init", "finite_diff_grad", "RngStream"]
__version__ = "0.1.0"
