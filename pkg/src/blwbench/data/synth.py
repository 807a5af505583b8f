"""Synthetic ECG beats and baseline wander for data-free runs.

Beats are sums of five Gaussian bumps (P, Q, R, S, T); baseline wander is a
few random low-frequency sinusoids plus a slow ramp.  Neither aims at
physiological realism beyond amplitude, timing and frequency-band shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beats import BEAT_LENGTH, FS_HZ, BeatSegment, pad_beat

BLW_BAND_HZ = (0.05, 3.0)


@dataclass(frozen=True)
class BeatParams:
    fs: float = FS_HZ
    rr_range_s: tuple = (0.6, 1.3)
    r_amp_range: tuple = (0.6, 1.6)
    r_time_s: tuple = (0.2, 0.25)
    r_width_s: tuple = (0.008, 0.014)
    p_amp_range: tuple = (0.05, 0.25)
    p_width_s: tuple = (0.015, 0.03)
    q_rel_amp: tuple = (0.05, 0.2)
    s_rel_amp: tuple = (0.1, 0.3)
    t_amp_range: tuple = (0.1, 0.45)
    t_width_s: tuple = (0.03, 0.06)


def _waves(rng, n, p: BeatParams, r_amp):
    """Return the ``(amplitude, centre_s, width_s)`` triples of one beat."""
    u = rng.uniform
    rr = n / p.fs
    r_t = u(*p.r_time_s)
    r_w = u(*p.r_width_s)
    p_w = u(*p.p_width_s)
    p_t = r_t - u(0.09, 0.14)
    t_w = u(*p.t_width_s)
    t_t = r_t + u(0.22, 0.3) * np.sqrt(rr)
    return [
        (u(*p.p_amp_range), p_t, p_w),
        (-u(*p.q_rel_amp) * r_amp, r_t - u(0.025, 0.035), u(0.006, 0.01)),
        (r_amp, r_t, r_w),
        (-u(*p.s_rel_amp) * r_amp, r_t + u(0.025, 0.035), u(0.006, 0.012)),
        (u(*p.t_amp_range), t_t, t_w),
    ]


def synth_beat_samples(rng, length=None, params=BeatParams(), r_amplitude=None):
    if length is None:
        length = int(round(rng.uniform(*params.rr_range_s) * params.fs))
    r_amp = float(rng.uniform(*params.r_amp_range)) if r_amplitude is None else float(r_amplitude)
    t = np.arange(length) / params.fs
    x = np.zeros(length)
    for amp, centre, width in _waves(rng, length, params, r_amp):
        x += amp * np.exp(-0.5 * ((t - centre) / width) ** 2)
    return x


def synth_ecg_beat(rng, params=BeatParams(), length=None, r_amplitude=None, record="synthetic",
                   beat_index=0):
    """One synthetic beat as a zero-padded :class:`BeatSegment`."""
    x = synth_beat_samples(rng, length, params, r_amplitude)
    x = x[:BEAT_LENGTH]
    return BeatSegment(pad_beat(x), len(x), record, 0, beat_index)


def synth_ecg_record(rng, n_beats, params=BeatParams()):
    """Continuous synthetic ECG and its beat-start boundaries (``n_beats + 1`` of them)."""
    parts, bounds = [], [0]
    for _ in range(n_beats):
        beat = synth_beat_samples(rng, None, params)
        parts.append(beat)
        bounds.append(bounds[-1] + len(beat))
    return np.concatenate(parts), bounds


def synth_blw(rng, length, fs=FS_HZ, band=BLW_BAND_HZ):
    """Baseline wander: 3-6 sinusoids in ``band`` with random phases, plus a slow ramp."""
    t = np.arange(length) / fs
    k = int(rng.integers(3, 7))
    freqs = rng.uniform(*band, size=k)
    amps = rng.uniform(0.2, 1.0, size=k)
    phases = rng.uniform(0, 2 * np.pi, size=k)
    x = (amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])).sum(axis=0)
    duration = max(length / fs, 1.0 / fs)
    slope = rng.uniform(-0.5, 0.5) / duration
    return x + slope * (t - t.mean())


def synth_noise_record(rng, seconds=1800.0, fs=FS_HZ, channels=2, segment_s=30.0, fade_s=5.0):
    """Multi-channel wander record built from cross-faded :func:`synth_blw` segments."""
    n = int(round(seconds * fs))
    seg = int(round(segment_s * fs))
    fade = int(round(fade_s * fs))
    hop = seg - fade
    ramp = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, fade))
    out = np.zeros((channels, n))
    for c in range(channels):
        start = 0
        while start < n:
            piece = synth_blw(rng, seg, fs)
            w = np.ones(seg)
            if start > 0:
                w[:fade] = ramp
            w[-fade:] = ramp[::-1]
            stop = min(start + seg, n)
            out[c, start:stop] += (piece * w)[:stop - start]
            start += hop
    return out
