"""Benchmark tables: CSV and Markdown rendering, parsing and merging."""

from __future__ import annotations

import csv
import io
import math
import subprocess
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, List

from . import __version__
from .errors import ConsistencyError, FormatError
from .metrics import METRIC_NAMES, SIGNIFICANCE, ComparisonSummary

SCHEMA_VERSION = 1
ROW_ORDER = ("fir", "iir", "drnn", "fcn_dae", "vanilla_l", "vanilla_nl", "multibranch", "deepfilter",
             "identity", "oracle")
LABELS = {
    "fir": "FIR Filter",
    "iir": "IIR Filter",
    "drnn": "DRNN",
    "fcn_dae": "FCN-DAE",
    "vanilla_l": "Vanilla L",
    "vanilla_nl": "Vanilla NL",
    "multibranch": "Multibranch LANL",
    "deepfilter": "Multibranch LANLD",
    "identity": "Identity (noisy input)",
    "oracle": "Oracle (clean target)",
}
COLUMNS = {"ssd": "SSD (au)", "mad": "MAD (au)", "prd": "PRD (%)", "cos_sim": "Cosine Sim ×100 (%)"}
PUBLISHED_NOTE = "published value, not reproduced"
# baselines without an implementation here; shown from published constants only
REFERENCE_ONLY = ("drnn", "fcn_dae")

_CSV_FIELDS = ["method", "label", "source", "n"]
for _k in METRIC_NAMES:
    _CSV_FIELDS += [f"{_k}_mean", f"{_k}_std"]
_CSV_FIELDS += [f"p_{_k}" for _k in METRIC_NAMES]


@dataclass
class ReportRow:
    method: str
    label: str
    source: str  # "measured" or PUBLISHED_NOTE
    mean: Dict[str, str]
    std: Dict[str, str]
    p: Dict[str, str] = field(default_factory=dict)
    n: str = ""

    def sort_key(self):
        rank = ROW_ORDER.index(self.method) if self.method in ROW_ORDER else len(ROW_ORDER)
        return (rank, self.method, self.source)


@dataclass
class BenchmarkReport:
    header: Dict[str, str]
    rows: List[ReportRow]

    def row(self, method, source="measured"):
        for r in self.rows:
            if r.method == method and r.source == source:
                return r
        raise KeyError(method)


def published_rows(methods=REFERENCE_ONLY):
    """Published mean/std rows, as the exact strings stored in the data file."""
    text = resources.files("blwbench").joinpath("reference/published_rows.csv").read_text()
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    out = []
    for rec in csv.DictReader(lines):
        if rec["key"] not in methods:
            continue
        mean = {k: rec[f"{c}_mean"] for k, c in zip(METRIC_NAMES, ("ssd", "mad", "prd", "cos"))}
        std = {k: rec[f"{c}_std"] for k, c in zip(METRIC_NAMES, ("ssd", "mad", "prd", "cos"))}
        out.append(ReportRow(rec["key"], rec["label"], PUBLISHED_NOTE, mean, std))
    return out


def provenance(dataset_digest=""):
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             timeout=5, cwd=resources.files("blwbench")).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    parts = [f"blwbench {__version__}", f"git {rev or 'unknown'}"]
    if dataset_digest:
        parts.append(f"dataset sha256:{dataset_digest[:16]}")
    return "; ".join(parts)


def _num(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def build_report(summary: ComparisonSummary, header: Dict[str, str], include_published=True):
    rows = []
    for method, stats in summary.methods.items():
        p = summary.p_values.get(method, {})
        rows.append(ReportRow(method, LABELS.get(method, method), "measured",
                              {k: _num(stats.mean[k]) for k in METRIC_NAMES},
                              {k: _num(stats.std[k]) for k in METRIC_NAMES},
                              {k: _num(p.get(k)) for k in METRIC_NAMES}, str(stats.n)))
    if include_published:
        rows.extend(published_rows())
    head = {"schema": str(SCHEMA_VERSION), "std": "population", "beats": str(len(summary.beats))}
    if summary.proposed:
        head["proposed"] = summary.proposed
    head.update({k: str(v) for k, v in header.items()})
    return BenchmarkReport(head, sorted(rows, key=ReportRow.sort_key))


def report_csv(report: BenchmarkReport):
    buf = io.StringIO()
    for k in sorted(report.header):
        buf.write(f"# {k}={report.header[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_FIELDS)
    for r in sorted(report.rows, key=ReportRow.sort_key):
        vals = [r.method, r.label, r.source, r.n]
        for k in METRIC_NAMES:
            vals += [r.mean.get(k, ""), r.std.get(k, "")]
        vals += [r.p.get(k, "") for k in METRIC_NAMES]
        w.writerow(vals)
    return buf.getvalue()


def parse_report_csv(text, origin="<report>"):
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            header[k] = v
        elif line:
            body.append(line)
    if header.get("schema") != str(SCHEMA_VERSION):
        raise FormatError(f"{origin}: report schema {header.get('schema')!r}, expected {SCHEMA_VERSION}")
    reader = csv.DictReader(body)
    if reader.fieldnames != _CSV_FIELDS:
        raise FormatError(f"{origin}: unexpected report columns")
    rows = []
    for rec in reader:
        rows.append(ReportRow(rec["method"], rec["label"], rec["source"],
                              {k: rec[f"{k}_mean"] for k in METRIC_NAMES},
                              {k: rec[f"{k}_std"] for k in METRIC_NAMES},
                              {k: rec[f"p_{k}"] for k in METRIC_NAMES}, rec["n"]))
    return BenchmarkReport(header, rows)


def merge_reports(reports: List[BenchmarkReport]):
    """Union of rows and headers; identical duplicates collapse, conflicts fail."""
    if not reports:
        raise ConsistencyError("nothing to merge")
    header: Dict[str, set] = {}
    for rep in reports:
        for k, v in rep.header.items():
            header.setdefault(k, set()).add(v)
    merged_header = {k: ",".join(sorted(v)) for k, v in header.items()}
    rows: Dict[tuple, ReportRow] = {}
    for rep in reports:
        for r in rep.rows:
            key = (r.method, r.source)
            if key in rows and rows[key] != r:
                raise ConsistencyError(f"conflicting rows for method {r.method!r}")
            rows[key] = r
    return BenchmarkReport(merged_header, sorted(rows.values(), key=ReportRow.sort_key))


def _fmt(s, digits):
    if s == "":
        return "—"
    v = float(s)
    return f"{v:.{digits}f}"


def _cell(r: ReportRow, k, significant):
    if r.source != "measured":
        text = f"{r.mean[k]}±{r.std[k]}"
    else:
        digits = 3 if k == "mad" else 2
        text = f"{_fmt(r.mean[k], digits)}±{_fmt(r.std[k], digits)}"
    return text + (" *" if significant else "")


def _p_text(s):
    if s == "":
        return "—"
    v = float(s)
    return f"{v:.2e}" if v < 1e-3 else f"{v:.4f}"


def report_markdown(report: BenchmarkReport):
    lines = ["# Baseline wander removal benchmark", ""]
    for k in sorted(report.header):
        lines.append(f"- {k}: {report.header[k]}")
    lines += ["", "| Method | " + " | ".join(COLUMNS[k] for k in METRIC_NAMES) + " | Source |",
              "|---" * (len(METRIC_NAMES) + 2) + "|"]
    for r in sorted(report.rows, key=ReportRow.sort_key):
        cells = []
        for k in METRIC_NAMES:
            p = r.p.get(k, "")
            cells.append(_cell(r, k, p != "" and float(p) < SIGNIFICANCE))
        lines.append(f"| {r.label} | " + " | ".join(cells) + f" | {r.source} |")
    proposed = report.header.get("proposed", "")
    lines += ["", f"`*` marks a Wilcoxon signed-rank p < {SIGNIFICANCE} against {proposed or 'the proposed model'}.",
              "", f"## Wilcoxon p-values vs {proposed or '—'}", "",
              "| Method | " + " | ".join(COLUMNS[k] for k in METRIC_NAMES) + " |",
              "|---" * (len(METRIC_NAMES) + 1) + "|"]
    for r in sorted(report.rows, key=ReportRow.sort_key):
        if r.source != "measured":
            continue
        lines.append(f"| {r.label} | " + " | ".join(_p_text(r.p.get(k, "")) for k in METRIC_NAMES) + " |")
    return "\n".join(lines) + "\n"


def write_report(report: BenchmarkReport, stem):
    """Write ``<stem>.csv`` and ``<stem>.md``; returns both paths."""
    paths = (f"{stem}.csv", f"{stem}.md")
    with open(paths[0], "w") as fh:
        fh.write(report_csv(report))
    with open(paths[1], "w") as fh:
        fh.write(report_markdown(report))
    return paths


def read_report(path):
    with open(path) as fh:
        return parse_report_csv(fh.read(), origin=path)


def published_value(method, metric):
    for r in published_rows(tuple(LABELS)):
        if r.method == method:
            return float(r.mean[metric]), float(r.std[metric])
    raise KeyError(method)

