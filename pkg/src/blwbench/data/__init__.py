"""WFDB parsing, resampling, beat segmentation, noise injection and dataset files."""

from .beats import (
    ALPHA_RANGE,
    BEAT_LENGTH,
    SPLITS,
    TEST_RECORDS,
    BeatPair,
    BeatSegment,
    NoiseStream,
    SplitAssignment,
    build_noise_streams,
    contaminate,
    extract_beats,
    inject_noise,
    make_splits,
)
from .container import Dataset, dataset_bytes, dataset_from_bytes, from_pairs, read_dataset, to_pairs, write_dataset
from .pipeline import prepare_qt, prepare_synthetic
from .resample import resample_250_to_360, resample_rational
from .synth import synth_blw, synth_ecg_beat, synth_ecg_record, synth_noise_record
from .wfdb import (
    Annotation,
    RecordHeader,
    beat_boundaries,
    encode_samples,
    parse_annotations,
    parse_header,
    read_adu,
    read_samples,
)
