"""Rational-ratio polyphase resampling with a Kaiser windowed-sinc kernel."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ..filters import kaiser_parameters


@lru_cache(maxsize=8)
def polyphase_bank(up, down, atten_db=60.0, passband=0.8):
    """Per-phase taps, each phase normalised to unit DC gain.

    The anti-imaging/anti-aliasing low-pass passes everything below
    ``passband`` times the lower Nyquist frequency and stops at that Nyquist.
    Returns ``(bank, half)`` where ``bank[p, i]`` is the tap used ``i`` input
    samples back for phase ``p`` and ``half`` is the kernel's centre index.
    """
    nyq = 0.5 / max(up, down)  # cycles per upsampled sample
    transition = (1.0 - passband) * nyq
    cutoff = nyq - transition / 2
    numtaps, beta = kaiser_parameters(atten_db, transition, 1.0)
    half = up * math.ceil((numtaps // 2) / up)
    n = np.arange(-half, half + 1, dtype=np.float64)
    h = 2 * cutoff * np.sinc(2 * cutoff * n) * np.kaiser(2 * half + 1, beta)
    per_phase = math.ceil((2 * half + 1) / up)
    padded = np.zeros(per_phase * up)
    padded[:len(h)] = h
    bank = padded.reshape(per_phase, up).T.copy()
    bank /= bank.sum(axis=1, keepdims=True)
    return bank, half


def output_length(n, up, down):
    return int(math.floor(n * up / down + 0.5))


def resample_rational(x, up, down, chunk=65536):
    """Resample ``x`` by ``up / down``.

    Edges are extended by odd reflection, so constants come out exact up to
    rounding and straight lines show no edge transient (interior error is set
    by the 60 dB kernel).
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.full(output_length(1, up, down), x[0])
    g = math.gcd(up, down)
    up, down = up // g, down // g
    if up == down:
        return x.copy()
    bank, half = polyphase_bank(up, down)
    taps = bank.shape[1]
    pad = taps + 1
    ext = np.empty(n + 2 * pad)
    ext[pad:pad + n] = x
    left_idx = np.clip(np.arange(pad, 0, -1), 0, n - 1)
    right_idx = np.clip(np.arange(n - 2, n - 2 - pad, -1), 0, n - 1)
    ext[:pad] = 2 * x[0] - x[left_idx]
    ext[pad + n:] = 2 * x[-1] - x[right_idx]

    m_out = output_length(n, up, down)
    y = np.empty(m_out)
    back = np.arange(taps)
    for start in range(0, m_out, chunk):
        m = np.arange(start, min(start + chunk, m_out))
        # output m sits at upsampled index m * down; kernel tap k = pos - j * up
        pos = m * down + half
        phase = pos % up
        idx = (pos // up)[:, None] - back[None, :] + pad
        y[m] = np.einsum("ij,ij->i", bank[phase], ext[idx])
    return y


def resample_250_to_360(x):
    return resample_rational(x, 36, 25)
