"""Reader for the subset of the WFDB format used by the QT and NSTDB records.

Supported: single-segment headers, signal formats 212 and 16 (one sample
per frame, optional byte offset), and MIT-format annotation files.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import DataLengthError, ParseError, UnsupportedFormatError

SUPPORTED_FORMATS = (212, 16)
DEFAULT_GAIN = 200.0

# annotation codes (WFDB ecgcodes.h)
NOTQRS = 0
NORMAL = 1
PWAVE = 24
TWAVE = 27
WFON = 39
WFOFF = 40
SKIP = 59
NUM = 60
SUB = 61
CHN = 62
AUX = 63
# codes that label a detected beat (isqrs in the WFDB library)
BEAT_CODES = frozenset({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 25, 30, 34, 35, 38, 41})


@dataclass
class SignalSpec:
    filename: str
    fmt: int
    gain: float = DEFAULT_GAIN
    baseline: int = 0
    units: str = "mV"
    adc_zero: int = 0
    byte_offset: int = 0
    description: str = ""


@dataclass
class RecordHeader:
    name: str
    n_signals: int
    fs: float
    n_samples: Optional[int]
    signals: List[SignalSpec] = field(default_factory=list)


_FMT_RE = re.compile(r"^(\d+)(?:x(\d+))?(?::(\d+))?(?:\+(\d+))?$")
_GAIN_RE = re.compile(r"^([-+0-9.eE]+)(?:\(([-+]?\d+)\))?(?:/(\S+))?$")


def parse_header(text):
    """Parse the text of a ``.hea`` file."""
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1)]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty header")
    lineno, first = lines[0]
    parts = first.split()
    if len(parts) < 2:
        raise ParseError("record line needs a name and a signal count", lineno)
    name = parts[0]
    if "/" in name:
        raise UnsupportedFormatError(f"multi-segment record {name!r} is not supported")
    try:
        n_signals = int(parts[1])
    except ValueError:
        raise ParseError(f"bad signal count {parts[1]!r}", lineno) from None
    if n_signals < 1:
        raise ParseError(f"signal count must be >= 1, got {n_signals}", lineno)
    fs = 250.0
    n_samples = None
    try:
        if len(parts) > 2:
            fs = float(re.split(r"[/(]", parts[2])[0])
        if len(parts) > 3:
            n_samples = int(parts[3])
    except ValueError:
        raise ParseError(f"bad record line {first!r}", lineno) from None
    if fs <= 0:
        raise ParseError(f"sampling frequency must be positive, got {fs}", lineno)

    signals = []
    for lineno, line in lines[1:1 + n_signals]:
        signals.append(_parse_signal_line(line, lineno))
    if len(signals) != n_signals:
        raise ParseError(f"header declares {n_signals} signals but lists {len(signals)}", lines[-1][0])
    return RecordHeader(name, n_signals, fs, n_samples, signals)


def _parse_signal_line(line, lineno):
    parts = line.split(maxsplit=8)
    if len(parts) < 2:
        raise ParseError("signal line needs a file name and a format", lineno)
    m = _FMT_RE.match(parts[1])
    if not m:
        raise ParseError(f"bad format field {parts[1]!r}", lineno)
    fmt = int(m.group(1))
    if fmt not in SUPPORTED_FORMATS:
        raise UnsupportedFormatError(f"line {lineno}: signal format {fmt} is not supported")
    if m.group(2) not in (None, "1") or m.group(3) not in (None, "0"):
        raise UnsupportedFormatError(f"line {lineno}: multi-sample frames and skew are not supported")
    spec = SignalSpec(parts[0], fmt, byte_offset=int(m.group(4) or 0))
    baseline = None
    if len(parts) > 2:
        g = _GAIN_RE.match(parts[2])
        if not g:
            raise ParseError(f"bad gain field {parts[2]!r}", lineno)
        gain = float(g.group(1))
        spec.gain = gain if gain != 0 else DEFAULT_GAIN
        if g.group(2) is not None:
            baseline = int(g.group(2))
        if g.group(3):
            spec.units = g.group(3)
    try:
        if len(parts) > 4:
            spec.adc_zero = int(parts[4])
    except ValueError:
        raise ParseError(f"bad ADC zero {parts[4]!r}", lineno) from None
    spec.baseline = spec.adc_zero if baseline is None else baseline
    if len(parts) > 8:
        spec.description = parts[8]
    return spec


def _decode_212(buf, count):
    need = (3 * count + 1) // 2
    if len(buf) < need:
        raise DataLengthError(f"format 212 needs {need} bytes for {count} samples, got {len(buf)}")
    groups = (count + 1) // 2
    raw = np.zeros(groups * 3, dtype=np.uint8)
    raw[:min(len(buf), groups * 3)] = np.frombuffer(buf[:groups * 3], dtype=np.uint8)
    raw = raw.reshape(groups, 3).astype(np.int32)
    s1 = raw[:, 0] | ((raw[:, 1] & 0x0F) << 8)
    s2 = raw[:, 2] | ((raw[:, 1] >> 4) << 8)
    out = np.empty(groups * 2, dtype=np.int32)
    out[0::2] = s1
    out[1::2] = s2
    out = out[:count]
    out[out >= 2048] -= 4096
    return out


def _decode_16(buf, count):
    need = 2 * count
    if len(buf) < need:
        raise DataLengthError(f"format 16 needs {need} bytes for {count} samples, got {len(buf)}")
    return np.frombuffer(buf[:need], dtype="<i2").astype(np.int32)


def _samples_available(fmt, nbytes):
    return (2 * nbytes) // 3 if fmt == 212 else nbytes // 2


def read_adu(header: RecordHeader, data: bytes):
    """Raw integer samples, shape ``(n_signals, n_samples)``.

    All signals must live in one interleaved file with one format.
    """
    fmts = {s.fmt for s in header.signals}
    files = {s.filename for s in header.signals}
    if len(fmts) != 1 or len(files) != 1:
        raise UnsupportedFormatError("signals split across files or formats are not supported")
    fmt = fmts.pop()
    offset = header.signals[0].byte_offset
    buf = data[offset:]
    nsig = header.n_signals
    n = header.n_samples
    if n is None:
        n = _samples_available(fmt, len(buf)) // nsig
    total = n * nsig
    flat = _decode_212(buf, total) if fmt == 212 else _decode_16(buf, total)
    return flat.reshape(n, nsig).T.copy()


def adu_to_physical(adu, header: RecordHeader):
    gains = np.array([s.gain for s in header.signals])[:, None]
    base = np.array([s.baseline for s in header.signals])[:, None]
    return (adu - base) / gains


def physical_to_adu(values, header: RecordHeader):
    gains = np.array([s.gain for s in header.signals])[:, None]
    base = np.array([s.baseline for s in header.signals])[:, None]
    return np.rint(np.asarray(values) * gains + base).astype(np.int32)


def read_samples(header: RecordHeader, data: bytes):
    """Physical samples (e.g. mV), shape ``(n_signals, n_samples)``."""
    return adu_to_physical(read_adu(header, data), header)


def encode_samples(adu, fmt):
    """Interleave and pack integer samples ``(n_signals, n)`` into format 212 or 16 bytes."""
    flat = np.asarray(adu, dtype=np.int64).T.ravel()
    if fmt == 16:
        return flat.astype("<i2").tobytes()
    if fmt != 212:
        raise UnsupportedFormatError(f"cannot encode format {fmt}")
    if np.any(flat < -2048) or np.any(flat > 2047):
        raise ValueError("format 212 samples must lie in [-2048, 2047]")
    u = flat & 0xFFF
    if len(u) % 2:
        u = np.append(u, 0)
    s1, s2 = u[0::2], u[1::2]
    out = np.empty((len(s1), 3), dtype=np.uint8)
    out[:, 0] = s1 & 0xFF
    out[:, 1] = ((s1 >> 8) & 0x0F) | (((s2 >> 8) & 0x0F) << 4)
    out[:, 2] = s2 & 0xFF
    raw = out.ravel().tobytes()
    if len(flat) % 2:
        raw = raw[:-1]
    return raw


@dataclass
class Annotation:
    sample: int
    code: int
    subtype: int = 0
    chan: int = 0
    num: int = 0
    aux: Optional[bytes] = None


def parse_annotations(buf: bytes):
    """Decode an MIT-format annotation stream into absolute-time annotations.

    Words are little-endian 16-bit: the top 6 bits hold the code, the low 10
    bits a time delta (or a field value for the pseudo-codes).  SKIP carries a
    32-bit interval, AUX a byte string; NUM, SUB and CHN modify the preceding
    annotation.  A zero word ends the stream.
    """
    out: List[Annotation] = []
    pos = 0
    t = 0
    n = len(buf)

    def word():
        nonlocal pos
        if pos + 2 > n:
            raise ParseError(f"truncated annotation word at byte {pos}")
        w = buf[pos] | (buf[pos + 1] << 8)
        pos += 2
        return w

    while True:
        if pos >= n:
            raise ParseError("annotation stream ended without terminator")
        w = word()
        code, value = w >> 10, w & 0x3FF
        if code == 0 and value == 0:
            return out
        if code == SKIP:
            if pos + 4 > n:
                raise ParseError(f"truncated SKIP interval at byte {pos}")
            hi = buf[pos] | (buf[pos + 1] << 8)
            lo = buf[pos + 2] | (buf[pos + 3] << 8)
            pos += 4
            interval = (hi << 16) | lo
            if interval >= 1 << 31:
                interval -= 1 << 32
            t += interval
        elif code == NUM:
            if out:
                out[-1].num = value
        elif code == SUB:
            if out:
                out[-1].subtype = value
        elif code == CHN:
            if out:
                out[-1].chan = value
        elif code == AUX:
            padded = value + (value & 1)
            if pos + padded > n:
                raise ParseError(f"truncated AUX string at byte {pos}")
            if out:
                out[-1].aux = bytes(buf[pos:pos + value])
            pos += padded
        else:
            t += value
            out.append(Annotation(t, code))


def beat_boundaries(annotations, mode="p_onset", codes=None):
    """Sample indices that start a beat.

    ``p_onset``: waveform-onset marks directly followed by a P-wave peak;
    ``qrs_onset``: onset marks followed by a beat label;
    ``beat``: the beat labels themselves (or any code set passed as ``codes``).
    """
    if codes is not None or mode == "beat":
        wanted = BEAT_CODES if codes is None else frozenset(codes)
        return [a.sample for a in annotations if a.code in wanted]
    follow = {"p_onset": {PWAVE}, "qrs_onset": BEAT_CODES}.get(mode)
    if follow is None:
        raise ValueError(f"unknown boundary mode {mode!r}")
    out = []
    for cur, nxt in zip(annotations, annotations[1:]):
        if cur.code == WFON and nxt.code in follow:
            out.append(cur.sample)
    return out


def read_record(directory, name):
    """Read ``name.hea`` and its signal file; returns ``(header, samples_mV)``."""
    with open(os.path.join(directory, name + ".hea")) as fh:
        header = parse_header(fh.read())
    with open(os.path.join(directory, header.signals[0].filename), "rb") as fh:
        data = fh.read()
    return header, read_samples(header, data)


def read_annotation_file(directory, name, extension):
    with open(os.path.join(directory, f"{name}.{extension}"), "rb") as fh:
        return parse_annotations(fh.read())
