"""Beat segmentation, dataset splits and baseline-wander noise injection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, MissingRecordError

log = logging.getLogger(__name__)

BEAT_LENGTH = 512
FS_HZ = 360.0
TEST_RESERVE = 0.13
ALPHA_RANGE = (0.2, 2.0)
TRAIN_FRACTION = 0.7
DEFAULT_SEED = 42

# two records from each source database of the QT Database
TEST_RECORDS = (
    "sel123", "sel233",      # MIT-BIH Arrhythmia
    "sel302", "sel307",      # MIT-BIH ST Change
    "sel820", "sel853",      # MIT-BIH Supraventricular Arrhythmia
    "sel16420", "sel16795",  # MIT-BIH Normal Sinus Rhythm
    "sele0106", "sele0121",  # European ST-T
    "sel32", "sel49",        # sudden death patients from BIH
    "sel14046", "sel15814",  # MIT-BIH Long-Term ECG
)

SPLITS = ("train", "val", "test")


@dataclass
class BeatSegment:
    samples: np.ndarray
    original_length: int
    record: str
    channel: int = 0
    beat_index: int = 0
    split: Optional[str] = None

    @property
    def key(self):
        return f"{self.record}:{self.channel}:{self.beat_index}"


def pad_beat(seg, length=BEAT_LENGTH):
    out = np.zeros(length)
    out[:len(seg)] = seg
    return out


def extract_beats(signal, boundaries, record="", channel=0, max_length=BEAT_LENGTH):
    """Cut ``signal`` between consecutive boundaries, dropping beats longer than ``max_length``.

    Kept beats are zero-padded at the tail to ``max_length``; ``beat_index``
    counts the boundary pairs, so discarded beats leave gaps in the numbering.
    """
    signal = np.asarray(signal, dtype=np.float64)
    b = [int(v) for v in boundaries]
    if any(b1 < b0 for b0, b1 in zip(b, b[1:])):
        raise ValueError("beat boundaries must be sorted ascending")
    beats = []
    for i, (start, stop) in enumerate(zip(b, b[1:])):
        n = stop - start
        if n <= 0 or n > max_length or start < 0 or stop > len(signal):
            continue
        beats.append(BeatSegment(pad_beat(signal[start:stop], max_length), n, record, channel, i))
    return beats


@dataclass
class SplitAssignment:
    train: List[str]
    val: List[str]
    test: List[str]
    seed: int

    def split_of(self):
        out = {}
        for name in SPLITS:
            for key in getattr(self, name):
                out[key] = name
        return out


def make_splits(beats_by_record: Dict[str, Sequence[BeatSegment]], seed=DEFAULT_SEED,
                test_records=TEST_RECORDS, require_test_records=True):
    """Put every beat of ``test_records`` in the test split and shuffle the rest 70/30.

    Beats are tagged in place and the assignment (lists of beat keys) returned.
    """
    missing = [r for r in test_records if r not in beats_by_record]
    if missing and require_test_records:
        raise MissingRecordError(missing)
    test_set = set(test_records)
    test, pool = [], []
    for record in sorted(beats_by_record):
        for beat in beats_by_record[record]:
            (test if record in test_set else pool).append(beat)
    order = np.random.default_rng(seed).permutation(len(pool))
    n_train = int(round(TRAIN_FRACTION * len(pool)))
    train = [pool[i] for i in order[:n_train]]
    val = [pool[i] for i in order[n_train:]]
    for name, group in (("train", train), ("val", val), ("test", test)):
        for beat in group:
            beat.split = name
    return SplitAssignment([b.key for b in train], [b.key for b in val], [b.key for b in test], seed)


@dataclass
class NoiseStream:
    """Concatenated noise samples consumed window by window with wrap-around."""

    samples: np.ndarray
    provenance: str
    sources: List[tuple] = field(default_factory=list)  # (channel, start, stop) in the source record
    cursor: int = 0

    def next_window(self, length=BEAT_LENGTH):
        n = len(self.samples)
        if n == 0:
            raise ConfigurationError(f"noise stream {self.provenance!r} is empty")
        idx = (self.cursor + np.arange(length)) % n
        start = self.cursor
        self.cursor = (self.cursor + length) % n
        return self.samples[idx], start


def build_noise_streams(noise, reserve=TEST_RESERVE):
    """Split a two-channel noise record into disjoint test and train/val streams.

    The first ``reserve`` fraction of each of the first two channels is kept
    for the test set (channel 1 then channel 2); the remainders are
    concatenated for training and validation.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim != 2 or noise.shape[0] < 2:
        raise ConfigurationError("noise record must have at least two channels")
    n = noise.shape[1]
    r = int(round(reserve * n))
    test = NoiseStream(np.concatenate([noise[0, :r], noise[1, :r]]), "test_reserved",
                       [(0, 0, r), (1, 0, r)])
    trainval = NoiseStream(np.concatenate([noise[0, r:], noise[1, r:]]), "trainval",
                           [(0, r, n), (1, r, n)])
    return test, trainval


@dataclass
class BeatPair:
    clean: BeatSegment
    noisy: np.ndarray
    alpha: float
    noise_offset: int = 0
    noise_stream: str = ""

    @property
    def key(self):
        return self.clean.key


def _amplitude(x, scaling):
    if len(x) == 0:
        return 0.0
    if scaling == "peak":
        return float(np.max(np.abs(x)))
    if scaling == "peak_to_peak":
        return float(np.max(x) - np.min(x))
    raise ConfigurationError(f"unknown noise scaling {scaling!r}")


def inject_noise(beat: BeatSegment, stream: NoiseStream, rng=None, alpha=None, scaling="peak"):
    """Add the next noise window, scaled to ``alpha`` times the beat amplitude.

    ``alpha`` is drawn uniformly from [0.2, 2.0] unless given.  Amplitudes are
    measured over the beat's original samples (the part that receives noise);
    the zero-padded tail is left untouched.
    """
    window, offset = stream.next_window(len(beat.samples))
    if alpha is None:
        alpha = float(rng.uniform(*ALPHA_RANGE))
    n = beat.original_length
    seg = window[:n]
    beat_amp = _amplitude(beat.samples[:n], scaling)
    noise_amp = _amplitude(seg, scaling)
    if beat_amp == 0.0:
        log.warning("beat %s is all zero; injected noise is zero", beat.key)
    scale = alpha * beat_amp / noise_amp if noise_amp > 0 else 0.0
    noisy = beat.samples.copy()
    noisy[:n] += scale * seg
    return BeatPair(beat, noisy, float(alpha), int(offset), stream.provenance)


def contaminate(beats: Sequence[BeatSegment], test_stream, trainval_stream, seed=DEFAULT_SEED, scaling="peak"):
    """Inject noise into every beat in a fixed order: test beats from the reserved stream."""
    rng = np.random.default_rng(seed)
    pairs = []
    for beat in beats:
        stream = test_stream if beat.split == "test" else trainval_stream
        pairs.append(inject_noise(beat, stream, rng, scaling=scaling))
    return pairs
