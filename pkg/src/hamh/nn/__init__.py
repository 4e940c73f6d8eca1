from . import tensor as F
from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .optim import AdamState, adam_step, clip_grad_norm, global_grad_norm, zero_grad
from .tensor import ShapeError, Tape, Tensor, as_tensor, backward, get_tape, no_grad

__all__ = [
    "F",
    "Tensor",
    "Tape",
    "ShapeError",
    "as_tensor",
    "backward",
    "get_tape",
    "no_grad",
    "grad_check",
    "AdamState",
    "adam_step",
    "clip_grad_norm",
    "global_grad_norm",
    "zero_grad",
    "save_checkpoint",
    "load_checkpoint",
    "read_checkpoint",
    "CheckpointError",
]
