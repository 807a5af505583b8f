"""Run a denoising method over the test beats and score it per beat."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .errors import ConfigurationError, FormatError
from .filters import design_fir_highpass, design_iir_butterworth_highpass, zero_phase_filter
from .metrics import METRIC_NAMES, batch_metrics
from .models.graph import normalize_kind

CLASSICAL = ("fir", "iir")
BASELINES = ("identity", "oracle")
SCHEMA_VERSION = 1


def classical_design(name):
    if name == "fir":
        return design_fir_highpass()
    if name == "iir":
        return design_iir_butterworth_highpass()
    raise ConfigurationError(f"unknown classical filter {name!r}")


def filter_streams(design, noisy, lengths, records, channels, beat_index):
    """Filter each (record, channel) as one stream of its beats, then cut it back.

    Beats are joined in ``beat_index`` order using their original samples
    only; outputs are zero-padded back to the window length.
    """
    out = np.zeros_like(noisy, dtype=np.float64)
    groups: Dict[tuple, List[int]] = {}
    for i, key in enumerate(zip(records, channels)):
        groups.setdefault((key[0], int(key[1])), []).append(i)
    for key in sorted(groups):
        idx = sorted(groups[key], key=lambda i: int(beat_index[i]))
        stream = np.concatenate([noisy[i, :lengths[i]] for i in idx])
        y = zero_phase_filter(design, stream)
        pos = 0
        for i in idx:
            n = int(lengths[i])
            out[i, :n] = y[pos:pos + n]
            pos += n
    return out


@dataclass
class EvalResult:
    method: str
    beats: List[str]
    metrics: Dict[str, np.ndarray]
    undefined: Dict[str, int]
    prd_form: str
    seconds: float
    info: Dict[str, str] = field(default_factory=dict)

    def rows(self):
        for i, beat in enumerate(self.beats):
            yield beat, [float(self.metrics[k][i]) for k in METRIC_NAMES]


def apply_method(method, ds, model=None):
    """Return the filtered beats of ``ds`` for ``method`` (a name or a model)."""
    if model is not None:
        return model.predict(ds.noisy[:, None, :])[:, 0, :]
    if method == "identity":
        return ds.noisy.copy()
    if method == "oracle":
        return ds.clean.copy()
    if method in CLASSICAL:
        return filter_streams(classical_design(method), ds.noisy, ds.lengths, ds.records,
                              ds.channels, ds.beat_index)
    raise ConfigurationError(f"method {method!r} needs a checkpoint")


def evaluate(method, ds, model=None, prd_form="printed", original_length=False, split="test"):
    """Score ``method`` on the ``split`` beats of ``ds``.

    Metrics cover the full zero-padded window unless ``original_length``.
    """
    sub = ds.subset(split) if split else ds
    if len(sub) == 0:
        raise ConfigurationError(f"{split or 'dataset'} split is empty")
    t0 = time.perf_counter()
    filtered = apply_method(method, sub, model)
    seconds = time.perf_counter() - t0
    lengths = sub.lengths if original_length else None
    metrics, undefined = batch_metrics(sub.clean, filtered, prd_form, lengths)
    info = {"window": "original" if original_length else "full"}
    if method in CLASSICAL:
        info["protocol"] = "concatenated per-record stream"
    return EvalResult(method, sub.keys, metrics, undefined, prd_form, seconds, info)


def method_label(method):
    """Canonical row name for a method or model kind."""
    try:
        return normalize_kind(method)
    except ConfigurationError:
        if method in CLASSICAL + BASELINES:
            return method
        raise


def per_beat_csv(result: EvalResult):
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION}\n# method={result.method}\n# prd_form={result.prd_form}\n")
    for key in sorted(result.info):
        buf.write(f"# {key}={result.info[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beat", *METRIC_NAMES])
    for beat, values in result.rows():
        w.writerow([beat, *(repr(v) for v in values)])
    return buf.getvalue()


def write_per_beat_csv(result, path):
    with open(path, "w") as fh:
        fh.write(per_beat_csv(result))


def read_per_beat_csv(path):
    header, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                header[k] = v
            else:
                lines.append(line)
    if header.get("schema") != str(SCHEMA_VERSION):
        raise FormatError(f"{path}: per-beat schema {header.get('schema')!r}, expected {SCHEMA_VERSION}")
    rows = list(csv.reader(lines))
    if not rows or rows[0] != ["beat", *METRIC_NAMES]:
        raise FormatError(f"{path}: unexpected columns")
    beats = [r[0] for r in rows[1:]]
    metrics = {k: np.array([float(r[j + 1]) for r in rows[1:]]) for j, k in enumerate(METRIC_NAMES)}
    undefined = {k: int(np.isnan(v).sum()) for k, v in metrics.items()}
    info = {k: v for k, v in header.items() if k not in ("schema", "method", "prd_form")}
    return EvalResult(header.get("method", ""), beats, metrics, undefined,
                      header.get("prd_form", "printed"), float("nan"), info)



