"""End-to-end corpus preparation: records -> beats -> splits -> noisy pairs."""

from __future__ import annotations

import glob
import logging
import math
import os
from fractions import Fraction

import numpy as np

from ..errors import ConfigurationError, MissingRecordError
from .beats import (
    DEFAULT_SEED,
    FS_HZ,
    SPLITS,
    TEST_RECORDS,
    build_noise_streams,
    contaminate,
    extract_beats,
    make_splits,
)
from .container import from_pairs
from .resample import resample_rational
from .synth import synth_ecg_record, synth_noise_record
from .wfdb import beat_boundaries, read_annotation_file, read_record

log = logging.getLogger(__name__)


def _ordered(beats_by_record, assignment):
    lookup = {b.key: b for beats in beats_by_record.values() for b in beats}
    return [lookup[k] for name in SPLITS for k in getattr(assignment, name)]


def prepare_synthetic(seed=DEFAULT_SEED, n_records=105, beats_per_record=20, n_test_records=14,
                      scaling="peak"):
    """Synthetic stand-in for the QT/NSTDB corpus, fully determined by ``seed``."""
    if not 0 < n_test_records < n_records:
        raise ConfigurationError("need at least one test and one training record")
    rec_ss, noise_ss, split_ss, inject_ss = np.random.SeedSequence(seed).spawn(4)
    rec_rng = np.random.default_rng(rec_ss)
    names = [f"syn{i:03d}" for i in range(1, n_records + 1)]
    beats_by_record = {}
    for name in names:
        signal, bounds = synth_ecg_record(rec_rng, beats_per_record)
        beats_by_record[name] = extract_beats(signal, bounds, record=name)
    test_records = sorted(np.random.default_rng(split_ss).choice(names, n_test_records, replace=False))
    split_seed = int(split_ss.generate_state(1)[0])
    assignment = make_splits(beats_by_record, split_seed, test_records=test_records)
    beats = _ordered(beats_by_record, assignment)

    n_trainval = len(assignment.train) + len(assignment.val)
    need_s = n_trainval * 512 / (2 * (1 - 0.13)) / FS_HZ
    noise = synth_noise_record(np.random.default_rng(noise_ss), seconds=max(1800.0, math.ceil(need_s)))
    test_stream, trainval_stream = build_noise_streams(noise)
    inject_seed = int(inject_ss.generate_state(1)[0])
    pairs = contaminate(beats, test_stream, trainval_stream, seed=inject_seed, scaling=scaling)
    meta = {"source": "synthetic", "seed": seed, "n_records": n_records,
            "beats_per_record": beats_per_record, "test_records": list(test_records),
            "noise_scaling": scaling}
    return from_pairs(pairs, meta)


def _to_360(x, fs):
    if fs == FS_HZ:
        return x
    ratio = Fraction(FS_HZ / fs).limit_denominator(1000)
    return resample_rational(x, ratio.numerator, ratio.denominator)


def prepare_qt(qt_dir, nstdb_dir, seed=DEFAULT_SEED, annotation_ext="q1c", boundary="p_onset",
               scaling="peak", test_records=TEST_RECORDS, noise_record="em"):
    """Build the benchmark corpus from local QT Database and NSTDB copies."""
    names = sorted(os.path.splitext(os.path.basename(p))[0]
                   for p in glob.glob(os.path.join(qt_dir, "*.hea")))
    missing = [r for r in test_records if r not in names]
    if missing:
        raise MissingRecordError(missing)
    beats_by_record = {}
    for name in names:
        ann_path = os.path.join(qt_dir, f"{name}.{annotation_ext}")
        if not os.path.exists(ann_path):
            log.warning("record %s has no .%s annotations; skipped", name, annotation_ext)
            continue
        header, signals = read_record(qt_dir, name)
        bounds = beat_boundaries(read_annotation_file(qt_dir, name, annotation_ext), mode=boundary)
        scale = FS_HZ / header.fs
        bounds = [int(math.floor(b * scale + 0.5)) for b in bounds]
        beats = []
        for ch in range(header.n_signals):
            beats.extend(extract_beats(_to_360(signals[ch], header.fs), bounds, record=name, channel=ch))
        beats_by_record[name] = beats
    assignment = make_splits(beats_by_record, seed, test_records=test_records)
    beats = _ordered(beats_by_record, assignment)

    nheader, noise = read_record(nstdb_dir, noise_record)
    if nheader.fs != FS_HZ:
        noise = np.array([_to_360(ch, nheader.fs) for ch in noise])
    test_stream, trainval_stream = build_noise_streams(noise)
    pairs = contaminate(beats, test_stream, trainval_stream, seed=seed, scaling=scaling)
    meta = {"source": "qt+nstdb", "seed": seed, "annotation_ext": annotation_ext,
            "boundary": boundary, "noise_scaling": scaling, "test_records": list(test_records)}
    return from_pairs(pairs, meta)
