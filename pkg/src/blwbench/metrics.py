"""Training loss, signal-fidelity metrics and the Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ConsistencyError, InsufficientDataError, ShapeError, UndefinedMetricError

DEFAULT_LAMBDA = 50.0
PRD_FORMS = ("printed", "conventional")
METRIC_NAMES = ("ssd", "mad", "prd", "cos_sim")
SIGNIFICANCE = 0.01


def _per_beat(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        raise ShapeError("loss needs at least one sample")
    if a.ndim == 1:
        return a[None, :]
    return a.reshape(a.shape[0], -1)


def loss_filtering(y_true, y_pred, lam=DEFAULT_LAMBDA):
    """Sum of squared differences plus ``lam`` times the largest squared difference.

    Both terms are computed per beat (leading axis) and averaged over the batch.
    Note the penalty term is ``max((y_true - y_pred) ** 2)``, i.e. the squared
    maximum absolute deviation.
    """
    return loss_and_grad(y_true, y_pred, lam)[0]


def loss_and_grad(y_true, y_pred, lam=DEFAULT_LAMBDA):
    """Return ``(loss, d loss / d y_pred)``; the max term's gradient goes to the first argmax."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"y_true shape {y_true.shape} != y_pred shape {y_pred.shape}")
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    d = _per_beat(y_true - y_pred)
    sq = d * d
    batch = d.shape[0]
    idx = np.argmax(sq, axis=1)
    rows = np.arange(batch)
    loss = float(np.mean(sq.sum(axis=1) + lam * sq[rows, idx]))
    grad = -2.0 * d
    grad[rows, idx] *= 1.0 + lam
    grad /= batch
    return loss, grad.reshape(y_pred.shape).astype(y_pred.dtype, copy=False)


@dataclass
class MetricsRecord:
    ssd: float
    mad: float
    prd: float
    cos_sim: float
    beat: Optional[str] = None


def ssd(s1, s2):
    d = np.asarray(s2, dtype=np.float64) - np.asarray(s1, dtype=np.float64)
    return float(np.sum(d * d))


def mad(s1, s2):
    return float(np.max(np.abs(np.asarray(s1, dtype=np.float64) - np.asarray(s2, dtype=np.float64))))


def prd(s1, s2, form="printed"):
    """Percentage root difference.

    ``printed`` centres the filtered signal ``s2`` on the mean of ``s1`` in the
    denominator; ``conventional`` uses ``s1 - mean(s1)`` instead.
    """
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    if form == "printed":
        ref = s2 - s1.mean()
    elif form == "conventional":
        ref = s1 - s1.mean()
    else:
        raise ValueError(f"unknown PRD form {form!r}")
    den = float(np.sum(ref * ref))
    if den == 0.0:
        raise UndefinedMetricError("PRD denominator is zero")
    return math.sqrt(ssd(s1, s2) / den) * 100.0


def cos_sim(s1, s2):
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    n1 = np.linalg.norm(s1)
    n2 = np.linalg.norm(s2)
    if n1 == 0.0 or n2 == 0.0:
        raise UndefinedMetricError("cosine similarity of a zero-norm signal")
    return float(np.dot(s1, s2) / (n1 * n2))


def compute_metrics(s1, s2, prd_form="printed", beat=None):
    s1 = np.ravel(np.asarray(s1, dtype=np.float64))
    s2 = np.ravel(np.asarray(s2, dtype=np.float64))
    if s1.shape != s2.shape or s1.size == 0:
        raise ShapeError(f"signals must have equal non-zero length, got {s1.size} and {s2.size}")
    return MetricsRecord(ssd(s1, s2), mad(s1, s2), prd(s1, s2, prd_form), cos_sim(s1, s2), beat)


def batch_metrics(clean, filtered, prd_form="printed", lengths=None):
    """Vectorised metrics for many beats.

    Returns ``(dict of arrays, undefined_counts)``; beats whose PRD or cosine
    similarity is undefined hold NaN in that array.  ``lengths`` restricts each
    beat to its first ``lengths[i]`` samples.
    """
    clean = np.asarray(clean, dtype=np.float64).reshape(len(clean), -1)
    filtered = np.asarray(filtered, dtype=np.float64).reshape(len(filtered), -1)
    if clean.shape != filtered.shape:
        raise ShapeError(f"clean {clean.shape} and filtered {filtered.shape} differ")
    if lengths is not None:
        mask = np.arange(clean.shape[1])[None, :] < np.asarray(lengths)[:, None]
    else:
        mask = np.ones(clean.shape, dtype=bool)
    n = mask.sum(axis=1)
    d = np.where(mask, filtered - clean, 0.0)
    out = {"ssd": np.sum(d * d, axis=1), "mad": np.max(np.abs(d), axis=1)}
    mean1 = np.where(mask, clean, 0.0).sum(axis=1) / n
    if prd_form == "printed":
        ref = filtered - mean1[:, None]
    elif prd_form == "conventional":
        ref = clean - mean1[:, None]
    else:
        raise ValueError(f"unknown PRD form {prd_form!r}")
    den = np.sum(np.where(mask, ref, 0.0) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out["prd"] = np.where(den > 0, np.sqrt(out["ssd"] / den) * 100.0, np.nan)
        c = np.where(mask, clean, 0.0)
        f = np.where(mask, filtered, 0.0)
        norms = np.linalg.norm(c, axis=1) * np.linalg.norm(f, axis=1)
        out["cos_sim"] = np.where(norms > 0, np.sum(c * f, axis=1) / norms, np.nan)
    undefined = {k: int(np.isnan(v).sum()) for k, v in out.items()}
    return out, undefined


# -- Wilcoxon signed-rank ---------------------------------------------------

EXACT_MAX_N = 25
MIN_PAIRS = 5


def _rank_abs(d):
    """Average ranks (1-based) of ``|d|``, ties share the mean rank."""
    a = np.abs(d)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a), dtype=np.float64)
    sorted_a = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_counts(doubled_ranks):
    """Number of sign assignments giving each value of 2 * W+ (dynamic programming)."""
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:len(counts) - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(a, b, method="auto"):
    """Two-sided p-value of the paired Wilcoxon signed-rank test.

    Zero differences are dropped and tied magnitudes get averaged ranks.  The
    exact null distribution is used for up to 25 non-zero pairs (``auto``),
    otherwise a normal approximation with continuity and tie corrections.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"paired samples differ in length: {a.shape} vs {b.shape}")
    d = (a - b).ravel()
    d = d[d != 0]
    n = len(d)
    if n < MIN_PAIRS:
        raise InsufficientDataError(f"need at least {MIN_PAIRS} non-zero differences, got {n}")
    ranks = _rank_abs(d)
    w_plus = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "approx"
    if method == "exact":
        doubled = np.rint(ranks * 2).astype(int)
        counts = _exact_counts(doubled)
        total = 2 ** n
        w2 = int(round(w_plus * 2))
        lower = sum(counts[:w2 + 1])
        upper = sum(counts[w2:])
        return float(min(1.0, 2 * min(lower, upper) / total))
    if method == "approx":
        mean = n * (n + 1) / 4.0
        _, tie_sizes = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes ** 3 - tie_sizes) / 48.0
        if var <= 0:
            return 1.0
        z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
        return float(min(1.0, 2.0 * ndtr(-z)))
    raise ValueError(f"unknown method {method!r}")


# -- aggregation ------------------------------------------------------------


@dataclass
class MethodStats:
    mean: Dict[str, float]
    std: Dict[str, float]
    n: int
    undefined: Dict[str, int] = field(default_factory=dict)


@dataclass
class ComparisonSummary:
    """Per-method mean/std (population) and Wilcoxon p-values vs the proposed method.

    ``cos_sim`` statistics are stored ×100, the way they are reported.
    """

    methods: Dict[str, MethodStats]
    p_values: Dict[str, Dict[str, Optional[float]]]
    proposed: Optional[str]
    beats: Sequence[str]

    def significant(self, method, metric):
        p = self.p_values.get(method, {}).get(metric)
        return p is not None and p < SIGNIFICANCE


def _as_arrays(records):
    if isinstance(records, dict):
        return {k: np.asarray(records[k], dtype=np.float64) for k in METRIC_NAMES}
    return {k: np.array([getattr(r, k) for r in records], dtype=np.float64) for k in METRIC_NAMES}


def aggregate_summary(per_method, beats=None, proposed=None):
    """Summarise per-beat metrics for several methods.

    ``per_method`` maps method name to either a list of :class:`MetricsRecord`
    or a dict of per-beat arrays.  ``beats`` maps method name to its ordered
    beat identifiers; every method must cover the identical list.
    """
    names = list(per_method)
    if beats is None:
        beats = {}
        for m in names:
            recs = per_method[m]
            if not isinstance(recs, dict):
                beats[m] = [r.beat for r in recs]
    beat_list = None
    for m, ids in beats.items():
        ids = list(ids)
        if beat_list is None:
            beat_list = ids
        elif ids != beat_list:
            raise ConsistencyError(f"method {m!r} was evaluated on a different beat set")
    arrays = {m: _as_arrays(per_method[m]) for m in names}
    sizes = {len(a["ssd"]) for a in arrays.values()}
    if len(sizes) > 1:
        raise ConsistencyError(f"methods have different beat counts: {sorted(sizes)}")

    stats = {}
    for m, arr in arrays.items():
        mean, std, undefined = {}, {}, {}
        for k in METRIC_NAMES:
            v = arr[k] * (100.0 if k == "cos_sim" else 1.0)
            ok = v[~np.isnan(v)]
            undefined[k] = int(len(v) - len(ok))
            mean[k] = float(np.mean(ok)) if len(ok) else float("nan")
            std[k] = float(np.std(ok)) if len(ok) else float("nan")
        stats[m] = MethodStats(mean, std, len(arr["ssd"]), undefined)

    p_values = {}
    if proposed is not None and proposed in arrays:
        for m in names:
            if m == proposed:
                continue
            p_values[m] = {}
            for k in METRIC_NAMES:
                x, y = arrays[proposed][k], arrays[m][k]
                ok = ~(np.isnan(x) | np.isnan(y))
                try:
                    p_values[m][k] = wilcoxon_signed_rank(x[ok], y[ok])
                except InsufficientDataError:
                    p_values[m][k] = None
    return ComparisonSummary(stats, p_values, proposed, list(beat_list or []))
