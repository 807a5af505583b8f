"""Classical high-pass baselines: Kaiser windowed-sinc FIR and Butterworth IIR.

Both are applied forward and backward (zero phase) with odd-reflection edge
padding.  Designs serialise to a plain-text coefficient file::

    # kind=fir
    # cutoff_hz=0.67
    # ...
    # n_b=8079
    # n_a=1
    <one numerator coefficient per line>
    <one denominator coefficient per line>
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import DesignError, FormatError

FS_HZ = 360.0
CUTOFF_HZ = 0.67
FIR_NUMTAPS = 8079
FIR_BETA = 2.18
FIR_TRANSITION_HZ = 0.07
FIR_STOPBAND_DB = 30.5
IIR_ORDER = 4


@dataclass(frozen=True)
class FirDesign:
    taps: np.ndarray
    cutoff_hz: float = CUTOFF_HZ
    fs_hz: float = FS_HZ
    kaiser_beta: float = FIR_BETA
    transition_hz: float = FIR_TRANSITION_HZ
    stopband_atten_db: float = FIR_STOPBAND_DB
    kind: str = field(default="fir", init=False)

    @property
    def numtaps(self):
        return len(self.taps)

    @property
    def order(self):
        return len(self.taps) - 1

    @property
    def b(self):
        return self.taps

    @property
    def a(self):
        return np.ones(1)

    def params(self):
        return {"cutoff_hz": self.cutoff_hz, "fs_hz": self.fs_hz, "kaiser_beta": self.kaiser_beta,
                "numtaps": self.numtaps, "transition_hz": self.transition_hz,
                "stopband_atten_db": self.stopband_atten_db}


@dataclass(frozen=True)
class IirDesign:
    b: np.ndarray
    a: np.ndarray
    cutoff_hz: float = CUTOFF_HZ
    fs_hz: float = FS_HZ
    sos: np.ndarray = None  # second-order sections used for filtering
    kind: str = field(default="iir", init=False)

    def __post_init__(self):
        if self.sos is None:
            object.__setattr__(self, "sos", sps.tf2sos(self.b, self.a))

    @property
    def order(self):
        return max(len(self.a), len(self.b)) - 1

    def params(self):
        return {"cutoff_hz": self.cutoff_hz, "fs_hz": self.fs_hz, "order": self.order,
                "family": "butterworth", "btype": "highpass"}


def kaiser_parameters(atten_db, transition_hz, fs_hz):
    """Tap count and beta from the Kaiser empirical formulas."""
    width = 2 * math.pi * transition_hz / fs_hz
    numtaps = int(math.ceil((atten_db - 7.95) / (2.285 * width))) + 1
    if atten_db > 50:
        beta = 0.1102 * (atten_db - 8.7)
    elif atten_db >= 21:
        beta = 0.5842 * (atten_db - 21) ** 0.4 + 0.07886 * (atten_db - 21)
    else:
        beta = 0.0
    return numtaps, beta


def design_fir_highpass(cutoff_hz=CUTOFF_HZ, fs_hz=FS_HZ, numtaps=FIR_NUMTAPS, beta=FIR_BETA,
                        transition_hz=FIR_TRANSITION_HZ, stopband_atten_db=FIR_STOPBAND_DB):
    """Windowed-sinc low-pass (unit DC gain) turned high-pass by spectral inversion."""
    if not 0 < cutoff_hz < fs_hz / 2:
        raise DesignError(f"cutoff {cutoff_hz} Hz must lie in (0, {fs_hz / 2}) Hz")
    if numtaps < 1 or numtaps % 2 == 0:
        raise DesignError(f"a spectrally inverted high-pass needs an odd tap count, got {numtaps}")
    half = (numtaps - 1) // 2
    m = np.arange(half + 1, dtype=np.float64)
    fc = cutoff_hz / fs_hz
    sinc = 2 * fc * np.sinc(2 * fc * m)
    if half:
        window = np.i0(beta * np.sqrt(1.0 - (m / half) ** 2)) / np.i0(beta)
    else:
        window = np.ones(1)
    h = sinc * window
    h /= h[0] + 2 * h[1:].sum()
    h = -h
    h[0] += 1.0
    taps = np.concatenate([h[:0:-1], h])
    return FirDesign(taps, cutoff_hz, fs_hz, beta, transition_hz, stopband_atten_db)


def design_iir_butterworth_highpass(cutoff_hz=CUTOFF_HZ, fs_hz=FS_HZ, order=IIR_ORDER):
    """Butterworth high-pass via the bilinear transform with pre-warping at the cutoff."""
    if not 0 < cutoff_hz < fs_hz / 2:
        raise DesignError(f"cutoff {cutoff_hz} Hz must lie in (0, {fs_hz / 2}) Hz")
    if order < 1:
        raise DesignError(f"order must be >= 1, got {order}")
    k = np.arange(1, order + 1)
    proto = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    wc = 2 * fs_hz * math.tan(math.pi * cutoff_hz / fs_hz)
    poles_s = wc / proto
    fs2 = 2 * fs_hz
    poles_z = (fs2 + poles_s) / (fs2 - poles_s)
    gain = np.real(np.prod(fs2 / (fs2 - poles_s)))
    b = gain * np.poly(np.ones(order))
    a = np.real(np.poly(poles_z))
    b = b / a[0]
    a = a / a[0]
    if np.any(np.abs(poles_z) >= 1.0) or np.any(np.abs(np.roots(a)) >= 1.0):
        raise DesignError("IIR design is unstable")
    return IirDesign(b, a, cutoff_hz, fs_hz, _sections(poles_z, gain))


def _sections(poles_z, gain):
    """Cascade of biquads, each with a double zero at z = 1 and one pole pair."""
    upper = sorted((p for p in poles_z if p.imag > 0), key=lambda p: -abs(p))
    real = sorted((p.real for p in poles_z if p.imag == 0), key=abs)
    rows = []
    for p in upper:
        rows.append([1.0, -2.0, 1.0, 1.0, -2.0 * p.real, abs(p) ** 2])
    for i in range(0, len(real), 2):
        pair = real[i:i + 2]
        if len(pair) == 2:
            rows.append([1.0, -2.0, 1.0, 1.0, -(pair[0] + pair[1]), pair[0] * pair[1]])
        else:
            rows.append([1.0, -1.0, 0.0, 1.0, -pair[0], 0.0])
    sos = np.array(rows)
    sos[0, :3] *= gain
    return sos


def frequency_response(design, freqs_hz):
    f = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
    w = 2 * np.pi * f / design.fs_hz

    def poly(coefs):
        n = np.arange(len(coefs))
        return np.exp(-1j * np.outer(w, n)) @ np.asarray(coefs, dtype=np.float64)

    return poly(design.b) / poly(design.a)


def _single_pass(design, x):
    x0 = x[0]
    if design.kind == "fir":
        taps = design.taps
        ext = np.concatenate([np.full(len(taps) - 1, x0), x])
        return sps.oaconvolve(ext, taps, mode="valid") if len(x) > 1 else np.array([x0 * taps.sum()])
    zi = sps.sosfilt_zi(design.sos) * x0
    y, _ = sps.sosfilt(design.sos, x, zi=zi)
    return y


def zero_phase_filter(design, x, padlen=None):
    """Forward-backward filtering with odd-reflection padding.

    Padding length defaults to ``min(3 * order, len(x) - 1)``.  Each pass
    starts from the steady state for the first sample it sees.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n == 0:
        return x.copy()
    if padlen is None:
        padlen = min(3 * design.order, n - 1)
    if padlen:
        left = 2 * x[0] - x[padlen:0:-1]
        right = 2 * x[-1] - x[-2:-padlen - 2:-1]
        ext = np.concatenate([left, x, right])
    else:
        ext = x
    y = _single_pass(design, ext)
    y = _single_pass(design, y[::-1])[::-1]
    return y[padlen:padlen + n] if padlen else y


def save_coefficients(design, path):
    lines = [f"# kind={design.kind}"]
    for key, value in sorted(design.params().items()):
        lines.append(f"# {key}={value}")
    lines.append(f"# n_b={len(design.b)}")
    lines.append(f"# n_a={len(design.a)}")
    lines.extend(repr(float(c)) for c in design.b)
    lines.extend(repr(float(c)) for c in design.a)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_coefficients(path):
    header, values = {}, []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                header[key.strip()] = value.strip()
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise FormatError(f"line {lineno}: not a coefficient: {line!r}") from exc
    try:
        nb, na = int(header["n_b"]), int(header["n_a"])
        kind = header["kind"]
    except KeyError as exc:
        raise FormatError(f"coefficient file lacks header field {exc}") from exc
    if len(values) != nb + na:
        raise FormatError(f"expected {nb + na} coefficients, found {len(values)}")
    b, a = np.array(values[:nb]), np.array(values[nb:])
    fs = float(header.get("fs_hz", FS_HZ))
    cutoff = float(header.get("cutoff_hz", CUTOFF_HZ))
    if kind == "fir":
        return FirDesign(b, cutoff, fs, float(header.get("kaiser_beta", FIR_BETA)),
                         float(header.get("transition_hz", FIR_TRANSITION_HZ)),
                         float(header.get("stopband_atten_db", FIR_STOPBAND_DB)))
    if kind == "iir":
        return IirDesign(b, a, cutoff, fs)
    raise FormatError(f"unknown design kind {kind!r}")
