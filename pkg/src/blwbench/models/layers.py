"""Trainable layers: a plain convolution and the multi-kernel filter module."""

from __future__ import annotations

import numpy as np

from ..core.tensor import (
    ConvParams,
    Tensor,
    activation,
    activation_backward,
    channel_concat,
    conv1d,
    conv1d_backward,
    from_channel_major,
    pad_length,
    tap_rows,
    taps_backward,
    taps_forward,
    to_channel_major,
)
from ..errors import ConfigurationError

MKLANL_KERNELS = (3, 5, 9, 15)
MKLANL_GROUPS = ("linear", "relu")


def glorot_conv(rng, c_out, c_in, k, dtype=np.float64):
    limit = np.sqrt(6.0 / (c_in * k + c_out * k))
    return rng.uniform(-limit, limit, size=(c_out, c_in, k)).astype(dtype)


class ConvLayer:
    """Convolution followed by a linear or ReLU activation."""

    kind = "conv"

    def __init__(self, name, in_channels, out_channels, kernel_size=9, dilation=0,
                 activation="linear", rng=None, dtype=np.float64):
        if activation not in MKLANL_GROUPS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.name = name
        self.activation = activation
        self.conv = ConvParams(
            Tensor(glorot_conv(rng, out_channels, in_channels, kernel_size, dtype)),
            Tensor(np.zeros(out_channels, dtype=dtype)),
            dilation,
        )
        self._cache = None

    @property
    def in_channels(self):
        return self.conv.in_channels

    @property
    def out_channels(self):
        return self.conv.out_channels

    def parameters(self):
        return {f"{self.name}.weight": self.conv.weight, f"{self.name}.bias": self.conv.bias}

    def describe(self):
        return {"type": "conv", "name": self.name, "in": self.in_channels, "out": self.out_channels,
                "kernel": self.conv.kernel_size, "dilation": self.conv.dilation,
                "activation": self.activation}

    def forward(self, x, keep_cache=True):
        return from_channel_major(self.forward_cm(to_channel_major(x), keep_cache))

    def backward(self, upstream):
        return from_channel_major(self.backward_cm(to_channel_major(upstream)))

    def forward_cm(self, x, keep_cache=True):
        k = self.conv.kernel_size
        step = self.conv.dilation + 1
        xp = pad_length(x, (k // 2) * step)
        cover = tap_rows([k], [self.out_channels])
        pre = taps_forward(xp, self.conv.weight.data, self.conv.bias.data, cover, step, x.shape[1])
        if keep_cache:
            self._cache = (xp, pre if self.activation == "relu" else None)
        return activation(pre, self.activation)

    def backward_cm(self, upstream):
        xp, pre = self._cache
        if pre is not None:
            upstream = np.where(pre > 0, upstream, 0.0)
        k = self.conv.kernel_size
        step = self.conv.dilation + 1
        cover = tap_rows([k], [self.out_channels])
        dx, dw, db = taps_backward(xp, self.conv.weight.data, upstream, cover, step, upstream.shape[1])
        self.conv.weight.accumulate(dw)
        self.conv.bias.accumulate(db)
        self._cache = None
        return dx


class MklanlModule:
    """Eight parallel convolution branches merged by channel concatenation.

    Branches use kernels 3, 5, 9 and 15, once with a linear and once with a
    ReLU activation, each producing ``total_filters // 8`` channels at the
    module's dilation rate.  Output channel order is
    ``linear k3, k5, k9, k15, relu k3, k5, k9, k15``.

    The fast path runs all branches together, one matrix product per tap
    offset; :meth:`forward_reference` evaluates them one by one instead.
    """

    kind = "mklanl"

    def __init__(self, name, in_channels, total_filters, dilation=0, rng=None, dtype=np.float64):
        if total_filters <= 0 or total_filters % 8:
            raise ConfigurationError(f"MKLANL filter count must be a positive multiple of 8, got {total_filters}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.name = name
        self.total_filters = total_filters
        self.dilation = dilation
        per = total_filters // 8
        self.branches = {}
        for group in MKLANL_GROUPS:
            for k in MKLANL_KERNELS:
                self.branches[(group, k)] = ConvParams(
                    Tensor(glorot_conv(rng, per, in_channels, k, dtype)),
                    Tensor(np.zeros(per, dtype=dtype)),
                    dilation,
                )
        self._in_channels = in_channels
        self._cache = None

    @property
    def in_channels(self):
        return self._in_channels

    @property
    def out_channels(self):
        return self.total_filters

    def branch_order(self):
        return [(g, k) for g in MKLANL_GROUPS for k in MKLANL_KERNELS]

    def parameters(self):
        out = {}
        for group, k in self.branch_order():
            p = self.branches[(group, k)]
            out[f"{self.name}.{group}.k{k}.weight"] = p.weight
            out[f"{self.name}.{group}.k{k}.bias"] = p.bias
        return out

    def describe(self):
        return {"type": "mklanl", "name": self.name, "in": self.in_channels,
                "out": self.total_filters, "dilation": self.dilation}

    # Internally the eight branches are stacked by descending kernel size
    # (k15 linear, k15 relu, k9 linear, ...) so that the rows touched by any
    # tap offset form a prefix; outputs are permuted back to public order.

    def _internal_layout(self):
        per = self.total_filters // 8
        blocks = [(g, k) for k in sorted(MKLANL_KERNELS, reverse=True) for g in MKLANL_GROUPS]
        index = {key: i for i, key in enumerate(blocks)}
        perm = np.concatenate([np.arange(index[key] * per, (index[key] + 1) * per)
                               for key in self.branch_order()])
        return blocks, perm

    def _stacked_weights(self):
        blocks, _ = self._internal_layout()
        kmax = max(MKLANL_KERNELS)
        per = self.total_filters // 8
        first = self.branches[blocks[0]].weight.data
        w = np.zeros((self.total_filters, self.in_channels, kmax), dtype=first.dtype)
        b = np.empty(self.total_filters, dtype=first.dtype)
        for i, (g, k) in enumerate(blocks):
            p = self.branches[(g, k)]
            lo = kmax // 2 - k // 2
            w[i * per:(i + 1) * per, :, lo:lo + k] = p.weight.data
            b[i * per:(i + 1) * per] = p.bias.data
        return w, b

    def _cover(self):
        per = self.total_filters // 8
        ks = [k for k in sorted(MKLANL_KERNELS, reverse=True) for _ in MKLANL_GROUPS]
        return tap_rows(ks, [per] * len(ks))

    def forward(self, x, keep_cache=True):
        return from_channel_major(self.forward_cm(to_channel_major(x), keep_cache))

    def backward(self, upstream):
        return from_channel_major(self.backward_cm(to_channel_major(upstream)))

    def forward_cm(self, x, keep_cache=True):
        _, perm = self._internal_layout()
        w, b = self._stacked_weights()
        step = self.dilation + 1
        xp = pad_length(x, (max(MKLANL_KERNELS) // 2) * step)
        out = taps_forward(xp, w, b, self._cover(), step, x.shape[1])[perm]
        half = self.total_filters // 2
        mask = out[half:] > 0
        out[half:] *= mask
        if keep_cache:
            self._cache = (xp, mask)
        return out

    def backward_cm(self, upstream):
        xp, mask = self._cache
        blocks, perm = self._internal_layout()
        half = self.total_filters // 2
        g_pub = upstream.copy()
        g_pub[half:] *= mask
        g = np.empty_like(g_pub)
        g[perm] = g_pub
        w, _ = self._stacked_weights()
        dx, dw, db = taps_backward(xp, w, g, self._cover(), self.dilation + 1, upstream.shape[1])
        per = self.total_filters // 8
        kmax = max(MKLANL_KERNELS)
        for i, (grp, k) in enumerate(blocks):
            p = self.branches[(grp, k)]
            lo = kmax // 2 - k // 2
            p.weight.accumulate(dw[i * per:(i + 1) * per, :, lo:lo + k])
            p.bias.accumulate(db[i * per:(i + 1) * per])
        self._cache = None
        return dx

    def forward_reference(self, x):
        parts = []
        for group, k in self.branch_order():
            parts.append(activation(conv1d(x, self.branches[(group, k)]), group))
        return channel_concat(parts)

    def backward_reference(self, x, upstream):
        """Per-branch adjoint; returns ``(input_grad, {param_name: grad})``."""
        per = self.total_filters // 8
        dx = np.zeros_like(x)
        grads = {}
        for j, (group, k) in enumerate(self.branch_order()):
            p = self.branches[(group, k)]
            pre = conv1d(x, p)
            g = activation_backward(pre, group, upstream[:, j * per:(j + 1) * per])
            gx, gw, gb = conv1d_backward(x, p, g)
            dx += gx
            grads[f"{self.name}.{group}.k{k}.weight"] = gw
            grads[f"{self.name}.{group}.k{k}.bias"] = gb
        return dx, grads
