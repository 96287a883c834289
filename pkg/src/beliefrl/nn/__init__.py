from . import autodiff, heads, layers, optim
from .autodiff import Tensor, backward, no_grad
from .optim import ParameterSet, adam_update

__all__ = [
    "autodiff", "heads", "layers", "optim",
    "Tensor", "backward", "no_grad", "ParameterSet", "adam_update",
]
