"""Dense 1-D convolution primitives with hand-written adjoints.

All arrays are laid out as ``(batch, channels, length)``.  Convolutions use
centered taps and same-length zero padding; a dilation rate ``r`` spaces the
taps ``r + 1`` samples apart, so ``r = 0`` is an ordinary convolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, NumericError, ShapeError

ACTIVATIONS = ("linear", "relu")


@dataclass
class Tensor:
    """Array with an optional gradient buffer of the same shape."""

    data: np.ndarray
    grad: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.grad is not None and self.grad.shape != self.data.shape:
            raise ShapeError(f"grad shape {self.grad.shape} != data shape {self.data.shape}")

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g):
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g


@dataclass
class ConvParams:
    """Weights ``(C_out, C_in, K)``, bias ``(C_out,)`` and a dilation rate."""

    weight: Tensor
    bias: Tensor
    dilation: int = 0
    padding: str = field(default="same", init=False)

    def __post_init__(self):
        if not isinstance(self.weight, Tensor):
            self.weight = Tensor(np.asarray(self.weight, dtype=float))
        if not isinstance(self.bias, Tensor):
            self.bias = Tensor(np.asarray(self.bias, dtype=float))
        w = self.weight.data
        if w.ndim != 3:
            raise ShapeError(f"conv weight must be rank 3, got shape {w.shape}")
        if w.shape[2] % 2 == 0:
            raise ConfigurationError(f"kernel size must be odd, got {w.shape[2]}")
        if self.bias.data.shape != (w.shape[0],):
            raise ShapeError(f"bias shape {self.bias.data.shape} != ({w.shape[0]},)")
        if int(self.dilation) != self.dilation or self.dilation < 0:
            raise ConfigurationError(f"dilation rate must be a non-negative integer, got {self.dilation}")
        self.dilation = int(self.dilation)

    @property
    def out_channels(self):
        return self.weight.data.shape[0]

    @property
    def in_channels(self):
        return self.weight.data.shape[1]

    @property
    def kernel_size(self):
        return self.weight.data.shape[2]


def _check_input(x, in_channels):
    if x.ndim != 3:
        raise ShapeError(f"expected (batch, channels, length) input, got shape {x.shape}")
    if x.shape[1] != in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, layer expects {in_channels}")
    if x.shape[2] < 1:
        raise ShapeError("input length must be >= 1")


def unfold(x, kernel_size, dilation):
    """Gather the taps seen by every output position.

    Returns an array of shape ``(B, C * K, L)`` where row ``c * K + s`` holds
    ``x[:, c, i + (s - K // 2) * (dilation + 1)]`` (zero outside the signal).
    """
    b, c, n = x.shape
    step = dilation + 1
    half = (kernel_size // 2) * step
    xp = np.zeros((b, c, n + 2 * half), dtype=x.dtype)
    xp[:, :, half:half + n] = x
    cols = np.empty((b, c, kernel_size, n), dtype=x.dtype)
    for s in range(kernel_size):
        cols[:, :, s, :] = xp[:, :, s * step:s * step + n]
    return cols.reshape(b, c * kernel_size, n)


def fold(cols, channels, kernel_size, dilation, length):
    """Adjoint of :func:`unfold`: scatter-add tap gradients back onto the input."""
    b = cols.shape[0]
    step = dilation + 1
    half = (kernel_size // 2) * step
    cols = cols.reshape(b, channels, kernel_size, length)
    xp = np.zeros((b, channels, length + 2 * half), dtype=cols.dtype)
    for s in range(kernel_size):
        xp[:, :, s * step:s * step + length] += cols[:, :, s, :]
    return xp[:, :, half:half + length]


def conv1d(x, params: ConvParams, cols=None):
    """Same-length dilated convolution (cross-correlation, centered taps)."""
    x = np.asarray(x)
    _check_input(x, params.in_channels)
    w = params.weight.data
    if cols is None:
        cols = unfold(x, params.kernel_size, params.dilation)
    out = np.matmul(w.reshape(w.shape[0], -1), cols)
    out += params.bias.data[None, :, None]
    return out


def conv1d_backward(x, params: ConvParams, upstream, cols=None):
    """Gradients of :func:`conv1d` w.r.t. input, weight and bias.

    Returns ``(input_grad, weight_grad, bias_grad)``.
    """
    x = np.asarray(x)
    _check_input(x, params.in_channels)
    w = params.weight.data
    c_out, c_in, k = w.shape
    expected = (x.shape[0], c_out, x.shape[2])
    if upstream.shape != expected:
        raise ShapeError(f"upstream gradient shape {upstream.shape} != {expected}")
    if cols is None:
        cols = unfold(x, k, params.dilation)
    bias_grad = upstream.sum(axis=(0, 2))
    weight_grad = np.tensordot(upstream, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
    dcols = np.matmul(w.reshape(c_out, -1).T, upstream)
    input_grad = fold(dcols, c_in, k, params.dilation, x.shape[2])
    return input_grad, weight_grad, bias_grad


def activation(x, kind):
    if kind == "linear":
        return x
    if kind == "relu":
        return np.maximum(x, 0.0)
    raise ConfigurationError(f"unknown activation {kind!r}")


def activation_backward(x, kind, upstream):
    """Gradient of :func:`activation`; ReLU's derivative at exactly 0 is 0."""
    if kind == "linear":
        return upstream
    if kind == "relu":
        return np.where(x > 0, upstream, 0.0)
    raise ConfigurationError(f"unknown activation {kind!r}")


def channel_concat(parts: Sequence[np.ndarray]):
    if not parts:
        raise ShapeError("channel_concat needs at least one part")
    b, _, n = parts[0].shape
    for p in parts:
        if p.ndim != 3 or p.shape[0] != b or p.shape[2] != n:
            raise ShapeError(f"cannot concatenate shapes {[q.shape for q in parts]}")
    if len(parts) == 1:
        return parts[0]
    return np.concatenate(parts, axis=1)


def channel_split(upstream, sizes: Sequence[int]):
    """Backward of :func:`channel_concat`: slice the gradient at the same offsets."""
    if sum(sizes) != upstream.shape[1]:
        raise ShapeError(f"split sizes {list(sizes)} do not sum to {upstream.shape[1]} channels")
    offsets = np.cumsum([0, *sizes])
    return [upstream[:, offsets[i]:offsets[i + 1], :] for i in range(len(sizes))]


def check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


# Channel-major fast path.
#
# Layers keep activations as (C, L, B).  After zero-padding the length axis,
# every tap offset is a zero-copy (C, L * B) view, so a convolution becomes one
# matrix product per tap offset with no unfolded copy of the input.


def to_channel_major(x):
    return np.ascontiguousarray(np.transpose(x, (1, 2, 0)))


def from_channel_major(x):
    return np.ascontiguousarray(np.transpose(x, (2, 0, 1)))


def tap_rows(kernel_sizes_per_row_block, block_rows):
    """Rows covered by each tap offset when row blocks are sorted by descending kernel size.

    Returns ``{offset: n_rows}`` meaning rows ``[0, n_rows)`` have a tap at ``offset``.
    """
    kmax = max(kernel_sizes_per_row_block)
    cover = {}
    for o in range(-(kmax // 2), kmax // 2 + 1):
        n = 0
        for k, rows in zip(kernel_sizes_per_row_block, block_rows):
            if abs(o) <= k // 2:
                n += rows
            else:
                break
        cover[o] = n
    return cover


def pad_length(x, half):
    c, n, b = x.shape
    xp = np.zeros((c, n + 2 * half, b), dtype=x.dtype)
    xp[:, half:half + n] = x
    return xp


def taps_forward(xp, weight, bias, cover, step, length):
    """Same-length convolution on a padded channel-major input.

    ``weight`` has shape ``(M, C, Kmax)`` with taps centered at ``Kmax // 2``;
    ``cover[o]`` rows take part at tap offset ``o``.
    """
    c, padded, b = xp.shape
    kmax = weight.shape[2]
    half = (padded - length) // 2
    taps = np.ascontiguousarray(weight.transpose(2, 0, 1))
    out = np.empty((weight.shape[0], length * b), dtype=xp.dtype)
    out[:] = bias[:, None]
    for o, rows in cover.items():
        if rows == 0:
            continue
        a = half + o * step
        view = xp[:, a:a + length, :].reshape(c, length * b)
        out[:rows] += taps[o + kmax // 2, :rows] @ view
    return out.reshape(weight.shape[0], length, b)


def taps_backward(xp, weight, upstream, cover, step, length):
    """Adjoint of :func:`taps_forward`; returns ``(input_grad, weight_grad, bias_grad)``."""
    c, padded, b = xp.shape
    m, _, kmax = weight.shape
    half = (padded - length) // 2
    g = upstream.reshape(m, length * b)
    taps = np.ascontiguousarray(weight.transpose(2, 0, 1))
    dtaps = np.zeros_like(taps)
    dxp = np.zeros_like(xp)
    for o, rows in cover.items():
        if rows == 0:
            continue
        a = half + o * step
        view = xp[:, a:a + length, :].reshape(c, length * b)
        gr = g[:rows]
        dtaps[o + kmax // 2, :rows] = gr @ view.T
        dxp[:, a:a + length, :] += (taps[o + kmax // 2, :rows].T @ gr).reshape(c, length, b)
    return dxp[:, half:half + length], dtaps.transpose(1, 2, 0), g.sum(axis=1)
