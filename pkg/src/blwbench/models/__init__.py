"""DeepFilter, its ablation variants, and checkpoint persistence."""

from .checkpoint import checkpoint_bytes, checkpoint_from_bytes, checkpoint_load, checkpoint_save
from .graph import (
    BEAT_LENGTH,
    DEFAULT_WIDTHS,
    MODEL_KINDS,
    MklanlConfig,
    ModelGraph,
    build_mklanl,
    build_model,
    forward,
    normalize_kind,
    parameter_count,
)
from .layers import MKLANL_GROUPS, MKLANL_KERNELS, ConvLayer, MklanlModule

__all__ = [
    "BEAT_LENGTH", "DEFAULT_WIDTHS", "MKLANL_GROUPS", "MKLANL_KERNELS", "MODEL_KINDS",
    "ConvLayer", "MklanlConfig", "MklanlModule", "ModelGraph", "build_mklanl", "build_model",
    "checkpoint_bytes", "checkpoint_from_bytes", "checkpoint_load", "checkpoint_save",
    "forward", "normalize_kind", "parameter_count",
]
