"""Model construction: DeepFilter and its ablation variants."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..core.tensor import from_channel_major, to_channel_major
from ..errors import ConfigurationError, ShapeError
from .layers import ConvLayer, MklanlModule

MODEL_KINDS = ("deepfilter", "multibranch", "vanilla_nl", "vanilla_l")
DEFAULT_WIDTHS = (64, 64, 32, 32, 16, 16)
DEEPFILTER_DILATIONS = (0, 3, 0, 3, 0, 3)
HEAD_KERNEL = 9
BEAT_LENGTH = 512


def normalize_kind(kind):
    k = str(kind).strip().lower().replace("-", "_")
    if k not in MODEL_KINDS:
        raise ConfigurationError(f"unknown model kind {kind!r}; expected one of {', '.join(MODEL_KINDS)}")
    return k


@dataclass(frozen=True)
class MklanlConfig:
    total_filters: int
    dilation: int = 0
    kernel_sizes: tuple = (3, 5, 9, 15)

    def __post_init__(self):
        if self.total_filters <= 0 or self.total_filters % 8:
            raise ConfigurationError(f"MKLANL filter count must be a positive multiple of 8, got {self.total_filters}")
        if tuple(self.kernel_sizes) != (3, 5, 9, 15):
            raise ConfigurationError("MKLANL kernel sizes are fixed at (3, 5, 9, 15)")


def build_mklanl(config: MklanlConfig, in_channels, name="mklanl", rng=None, dtype=np.float64):
    return MklanlModule(name, in_channels, config.total_filters, config.dilation, rng=rng, dtype=dtype)


class ModelGraph:
    """Sequential stack of layers with a flat named parameter store."""

    def __init__(self, kind, layers, widths, dilations, input_length=BEAT_LENGTH):
        self.kind = kind
        self.layers = list(layers)
        self.widths = tuple(widths)
        self.dilations = tuple(dilations)
        self.input_length = input_length
        self.metadata = {}
        self._params = OrderedDict()
        for layer in self.layers:
            self._params.update(layer.parameters())

    def parameters(self):
        return self._params

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def layer_widths(self):
        return [layer.out_channels for layer in self.layers]

    def describe(self):
        return [layer.describe() for layer in self.layers]

    def _check(self, x):
        if x.ndim != 3 or x.shape[1] != 1:
            raise ShapeError(f"model input must have shape (B, 1, L), got {x.shape}")
        if self.input_length is not None and x.shape[2] != self.input_length:
            raise ShapeError(f"model expects length {self.input_length}, got {x.shape[2]}")

    def forward(self, x, keep_cache=True):
        x = np.asarray(x)
        self._check(x)
        h = to_channel_major(x)
        for layer in self.layers:
            h = layer.forward_cm(h, keep_cache=keep_cache)
        return from_channel_major(h)

    def backward(self, upstream):
        g = to_channel_major(upstream)
        for layer in reversed(self.layers):
            g = layer.backward_cm(g)
        return from_channel_major(g)

    def predict(self, x, batch_size=64):
        x = np.asarray(x)
        outs = [self.forward(x[i:i + batch_size], keep_cache=False) for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0) if outs else np.zeros_like(x)

    def astype(self, dtype):
        for t in self._params.values():
            t.data = t.data.astype(dtype)
            t.grad = None
        return self


def build_model(kind, widths=DEFAULT_WIDTHS, input_length=BEAT_LENGTH, seed=42, dtype=np.float64):
    """Build one of ``deepfilter``, ``multibranch``, ``vanilla_nl``, ``vanilla_l``.

    Weights are Glorot-uniform from ``seed``; biases start at zero.
    """
    kind = normalize_kind(kind)
    widths = tuple(int(w) for w in widths)
    if len(widths) != len(DEFAULT_WIDTHS):
        raise ConfigurationError(f"expected {len(DEFAULT_WIDTHS)} layer widths, got {len(widths)}")
    rng = np.random.default_rng(seed)
    if kind == "deepfilter":
        dilations = DEEPFILTER_DILATIONS
    else:
        dilations = (0,) * len(widths)
    layers = []
    c_in = 1
    for i, (n, r) in enumerate(zip(widths, dilations), start=1):
        if kind in ("deepfilter", "multibranch"):
            layers.append(build_mklanl(MklanlConfig(n, r), c_in, name=f"mod{i}", rng=rng, dtype=dtype))
        else:
            act = "relu" if kind == "vanilla_nl" else "linear"
            layers.append(ConvLayer(f"conv{i}", c_in, n, HEAD_KERNEL, 0, act, rng=rng, dtype=dtype))
        c_in = n
    layers.append(ConvLayer("head", c_in, 1, HEAD_KERNEL, 0, "linear", rng=rng, dtype=dtype))
    return ModelGraph(kind, layers, widths, dilations, input_length)


def forward(model: ModelGraph, batch):
    return model.forward(batch, keep_cache=False)


def parameter_count(model):
    return int(sum(t.data.size for t in model.parameters().values()))
