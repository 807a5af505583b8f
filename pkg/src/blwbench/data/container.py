"""Prepared-dataset container.

Layout (little-endian)::

    b"DFDS"                      magic
    u32  version                 currently 1
    u64  beat count
    u32  beat length             512
    u32  n, n bytes              metadata, UTF-8 JSON with sorted keys
    count x record:
        16s  record name         ASCII, NUL padded
        u16  channel
        u8   split               0 train, 1 val, 2 test
        u8   reserved (0)
        u32  beat index
        u32  original length
        f64  noise scale alpha
        i64  noise window offset in its stream
        f64  clean[beat length]
        f64  noisy[beat length]
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ..errors import FormatError
from .beats import BEAT_LENGTH, SPLITS, BeatPair, BeatSegment

MAGIC = b"DFDS"
VERSION = 1
_HEAD = struct.Struct("<4sIQI")
_REC = struct.Struct("<16sHBBIIdq")


@dataclass
class Dataset:
    """Columnar view of a prepared corpus."""

    clean: np.ndarray
    noisy: np.ndarray
    lengths: np.ndarray
    records: List[str]
    channels: np.ndarray
    beat_index: np.ndarray
    split: np.ndarray  # codes into SPLITS
    alpha: np.ndarray
    noise_offset: np.ndarray
    metadata: Dict = field(default_factory=dict)

    def __len__(self):
        return len(self.clean)

    @property
    def keys(self):
        return [f"{r}:{c}:{b}" for r, c, b in zip(self.records, self.channels, self.beat_index)]

    def subset(self, name):
        idx = np.flatnonzero(self.split == SPLITS.index(name))
        return self.take(idx)

    def take(self, idx):
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.clean[idx], self.noisy[idx], self.lengths[idx],
                       [self.records[i] for i in idx], self.channels[idx], self.beat_index[idx],
                       self.split[idx], self.alpha[idx], self.noise_offset[idx], dict(self.metadata))

    def counts(self):
        return {name: int(np.sum(self.split == i)) for i, name in enumerate(SPLITS)}


def from_pairs(pairs: List[BeatPair], metadata=None):
    n = len(pairs)
    length = len(pairs[0].noisy) if n else BEAT_LENGTH
    return Dataset(
        clean=np.array([p.clean.samples for p in pairs]).reshape(n, length),
        noisy=np.array([p.noisy for p in pairs]).reshape(n, length),
        lengths=np.array([p.clean.original_length for p in pairs], dtype=int),
        records=[p.clean.record for p in pairs],
        channels=np.array([p.clean.channel for p in pairs], dtype=int),
        beat_index=np.array([p.clean.beat_index for p in pairs], dtype=int),
        split=np.array([SPLITS.index(p.clean.split) for p in pairs], dtype=int),
        alpha=np.array([p.alpha for p in pairs], dtype=float),
        noise_offset=np.array([p.noise_offset for p in pairs], dtype=np.int64),
        metadata=dict(metadata or {}),
    )


def to_pairs(ds: Dataset):
    out = []
    for i in range(len(ds)):
        seg = BeatSegment(ds.clean[i].copy(), int(ds.lengths[i]), ds.records[i], int(ds.channels[i]),
                          int(ds.beat_index[i]), SPLITS[ds.split[i]])
        out.append(BeatPair(seg, ds.noisy[i].copy(), float(ds.alpha[i]), int(ds.noise_offset[i])))
    return out


def dataset_bytes(ds: Dataset):
    length = ds.clean.shape[1] if len(ds) else BEAT_LENGTH
    meta = json.dumps(ds.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [_HEAD.pack(MAGIC, VERSION, len(ds), length), struct.pack("<I", len(meta)), meta]
    clean = np.ascontiguousarray(ds.clean, dtype="<f8")
    noisy = np.ascontiguousarray(ds.noisy, dtype="<f8")
    for i in range(len(ds)):
        name = ds.records[i].encode("ascii")
        if len(name) > 16:
            raise FormatError(f"record name {ds.records[i]!r} longer than 16 bytes")
        chunks.append(_REC.pack(name, int(ds.channels[i]), int(ds.split[i]), 0, int(ds.beat_index[i]),
                                int(ds.lengths[i]), float(ds.alpha[i]), int(ds.noise_offset[i])))
        chunks.append(clean[i].tobytes())
        chunks.append(noisy[i].tobytes())
    return b"".join(chunks)


def write_dataset(ds: Dataset, path):
    data = dataset_bytes(ds)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".dfds-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dataset_from_bytes(buf):
    if len(buf) < _HEAD.size + 4:
        raise FormatError("dataset file truncated")
    magic, version, count, length = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError("not a prepared dataset (bad magic)")
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    pos = _HEAD.size
    (meta_len,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    try:
        metadata = json.loads(buf[pos:pos + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError("corrupt dataset metadata") from exc
    pos += meta_len
    rec_size = _REC.size + 16 * length
    if len(buf) != pos + count * rec_size:
        raise FormatError(f"dataset size mismatch: expected {pos + count * rec_size} bytes, got {len(buf)}")
    clean = np.empty((count, length))
    noisy = np.empty((count, length))
    lengths = np.empty(count, dtype=int)
    channels = np.empty(count, dtype=int)
    beat_index = np.empty(count, dtype=int)
    split = np.empty(count, dtype=int)
    alpha = np.empty(count)
    offsets = np.empty(count, dtype=np.int64)
    records = []
    for i in range(count):
        name, ch, sp, _, bi, ol, a, off = _REC.unpack_from(buf, pos)
        if sp >= len(SPLITS):
            raise FormatError(f"record {i}: bad split code {sp}")
        pos += _REC.size
        clean[i] = np.frombuffer(buf, dtype="<f8", count=length, offset=pos)
        pos += 8 * length
        noisy[i] = np.frombuffer(buf, dtype="<f8", count=length, offset=pos)
        pos += 8 * length
        records.append(name.rstrip(b"\0").decode("ascii"))
        channels[i], split[i], beat_index[i], lengths[i], alpha[i], offsets[i] = ch, sp, bi, ol, a, off
    return Dataset(clean, noisy, lengths, records, channels, beat_index, split, alpha, offsets, metadata)


def read_dataset(path):
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())
