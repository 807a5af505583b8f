"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError


class Identity:
    """Parameter-free pass-through fragment."""

    def forward(self, x):
        return x

    def backward(self, upstream):
        return upstream

    def parameters(self):
        return {}


def _rel_err(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def grad_check(fragment, x, tolerance=None, step=2.0 ** -20, seed=0):
    """Return the max relative error between analytic and numeric gradients.

    ``fragment`` must expose ``forward(x)``, ``backward(upstream)`` returning
    the input gradient, and ``parameters()`` mapping names to tensors whose
    ``grad`` buffers ``backward`` fills.  The scalar probed is
    ``sum(forward(x) * R)`` for a fixed random ``R``; each central difference
    is taken on the outputs before projecting onto ``R``, and the default
    step is a power of two so the perturbations themselves are exact.

    If ``tolerance`` is given, a :class:`AssertionError` is raised when the
    error exceeds it.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    params = fragment.parameters()
    out = fragment.forward(x)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite output during gradient check")
    probe = np.random.default_rng(seed).standard_normal(out.shape)

    for t in params.values():
        t.grad = None
    input_grad = fragment.backward(probe)

    def output():
        y = np.array(fragment.forward(x), copy=True)
        if not np.all(np.isfinite(y)):
            raise NumericError("non-finite output during gradient check")
        return y

    def numeric_grad(arr):
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = hi = orig + step
            yp = output()
            flat[i] = lo = orig - step
            ym = output()
            flat[i] = orig
            gflat[i] = float(np.sum((yp - ym) * probe)) / (hi - lo)
        return g

    worst = float(np.max(_rel_err(input_grad, numeric_grad(x)), initial=0.0))
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in params.items()}
    for name, t in params.items():
        err = _rel_err(analytic[name], numeric_grad(t.data))
        worst = max(worst, float(np.max(err, initial=0.0)))
    if tolerance is not None and worst > tolerance:
        raise AssertionError(f"gradient check failed: max relative error {worst:.3e} > {tolerance:.1e}")
    return worst
