"""Minimal deterministic 1-D tensor engine: convolutions, activations, Adam."""

from .gradcheck import Identity, grad_check
from .optim import (
    CONTINUE,
    MIN_LR,
    REDUCE_LR,
    STOP,
    OptimizerState,
    ScheduleState,
    adam_step,
    plateau_schedule_update,
    reduced_lr,
)
from .tensor import (
    ACTIVATIONS,
    ConvParams,
    Tensor,
    activation,
    activation_backward,
    channel_concat,
    channel_split,
    conv1d,
    conv1d_backward,
    fold,
    unfold,
)

__all__ = [
    "ACTIVATIONS", "CONTINUE", "MIN_LR", "REDUCE_LR", "STOP",
    "ConvParams", "Identity", "OptimizerState", "ScheduleState", "Tensor",
    "activation", "activation_backward", "adam_step", "channel_concat",
    "channel_split", "conv1d", "conv1d_backward", "fold", "grad_check",
    "plateau_schedule_update", "reduced_lr", "unfold",
]
