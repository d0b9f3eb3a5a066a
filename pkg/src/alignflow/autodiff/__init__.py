from . import tensor as ops
from .nn import MLP, Linear, unique_parameters
from .optim import Adam, AdamState, clip_gradients, global_norm
from .tensor import (
    AutodiffError,
    DomainError,
    ShapeError,
    Tape,
    Tensor,
    as_tensor,
    backward,
    no_tape,
)

__all__ = [
    "ops",
    "MLP",
    "Linear",
    "unique_parameters",
    "Adam",
    "AdamState",
    "clip_gradients",
    "global_norm",
    "AutodiffError",
    "DomainError",
    "ShapeError",
    "Tape",
    "Tensor",
    "as_tensor",
    "backward",
    "no_tape",
]
