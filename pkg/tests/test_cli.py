import csv
import json
import math

import numpy as np
import pytest

from blwbench.cli import cmd_compare, cmd_evaluate, cmd_report, cmd_time, main
from blwbench.data import prepare_synthetic, read_dataset, write_dataset
from blwbench.errors import ConsistencyError, FormatError
from blwbench.evaluate import read_per_beat_csv
from blwbench.metrics import ssd
from blwbench.models import build_model, checkpoint_save
from blwbench.report import parse_report_csv, published_value, read_report
from blwbench.train import RunConfig


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    ds = prepare_synthetic(seed=11, n_records=8, beats_per_record=5, n_test_records=2)
    write_dataset(ds, d / "ds.dfds")
    model = build_model("deepfilter", widths=(8,) * 6, seed=1)
    model.metadata["seed"] = 1
    checkpoint_save(model, d / "df.ckpt")
    return d


def read_beats(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


@pytest.fixture(scope="module")
def compared(workdir):
    specs = [f"deepfilter={workdir / 'df.ckpt'}", "identity", "iir", "fir"]
    return cmd_compare(specs, workdir / "ds.dfds", workdir / "cmp", config=RunConfig(seed=1))


class TestPrepare:
    def test_synthetic_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.dfds", tmp_path / "b.dfds"
        assert main(["prepare", "--synthetic", "--seed", "42", "--out", str(a)]) == 0
        assert main(["prepare", "--synthetic", "--seed", "42", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        out = capsys.readouterr().out.splitlines()[0]
        counts = dict(kv.split("=") for kv in out.split())
        ds = read_dataset(a)
        assert {k: int(v) for k, v in counts.items()} == ds.counts()
        assert len(ds) >= 2000

    def test_missing_dirs_error_line(self, tmp_path, capsys):
        assert main(["prepare", "--out", str(tmp_path / "x")]) == 2
        err = capsys.readouterr().err.strip()
        assert err.startswith("error: code=") and "type=ConfigurationError" in err

    def test_missing_records(self, tmp_path, capsys):
        (tmp_path / "qt").mkdir()
        (tmp_path / "ns").mkdir()
        code = main(["prepare", "--qt-dir", str(tmp_path / "qt"), "--nstdb-dir", str(tmp_path / "ns"),
                     "--out", str(tmp_path / "x")])
        assert code != 0
        err = capsys.readouterr().err
        assert "MissingRecordError" in err and "sel123" in err


class TestEvaluate:
    def test_identity(self, workdir):
        res = cmd_evaluate("identity", workdir / "ds.dfds", workdir / "ident")
        test = read_dataset(workdir / "ds.dfds").subset("test")
        expected = [ssd(c, n) for c, n in zip(test.clean, test.noisy)]
        np.testing.assert_allclose(res.metrics["ssd"], expected, rtol=1e-12)
        back = read_per_beat_csv(workdir / "ident.beats.csv")
        assert back.beats == test.keys
        assert np.array_equal(back.metrics["ssd"], res.metrics["ssd"])

    def test_oracle(self, workdir):
        res = cmd_evaluate("oracle", workdir / "ds.dfds", workdir / "orc")
        for k in ("ssd", "mad", "prd"):
            assert not res.metrics[k].any()
        np.testing.assert_allclose(res.metrics["cos_sim"], 1.0)

    def test_checkpoint_twice_identical(self, workdir):
        spec = f"deepfilter={workdir / 'df.ckpt'}"
        cmd_evaluate(spec, workdir / "ds.dfds", workdir / "e1")
        cmd_evaluate(spec, workdir / "ds.dfds", workdir / "e2")
        for suffix in (".beats.csv", ".csv", ".md"):
            assert (workdir / f"e1{suffix}").read_bytes() == (workdir / f"e2{suffix}").read_bytes()

    def test_cli_evaluate(self, workdir, capsys):
        code = main(["evaluate", "--model", "iir", "--dataset", str(workdir / "ds.dfds"),
                     "--out", str(workdir / "iir")])
        assert code == 0
        assert capsys.readouterr().out.startswith("method=iir beats=")
        assert "# protocol=concatenated per-record stream" in (workdir / "iir.beats.csv").read_text()

    def test_checkpoint_kind_mismatch(self, workdir, capsys):
        code = main(["evaluate", "--model", "vanilla-l", "--checkpoint", str(workdir / "df.ckpt"),
                     "--dataset", str(workdir / "ds.dfds"), "--out", str(workdir / "bad")])
        assert code == 2
        assert "type=CompatibilityError" in capsys.readouterr().err

    def test_missing_file_io_error(self, workdir, capsys):
        code = main(["evaluate", "--model", "identity", "--dataset", str(workdir / "nope.dfds"),
                     "--out", str(workdir / "x")])
        assert code == 3
        assert "code=io" in capsys.readouterr().err

    def test_conventional_prd(self, workdir):
        res = cmd_evaluate("identity", workdir / "ds.dfds", workdir / "conv", prd_form="conventional")
        assert "# prd_form=conventional" in (workdir / "conv.csv").read_text()
        printed = cmd_evaluate("identity", workdir / "ds.dfds", workdir / "prt")
        assert not np.array_equal(res.metrics["prd"], printed.metrics["prd"])


class TestCompare:
    def test_published_row(self, workdir, compared):
        md = (workdir / "cmp.md").read_text()
        drnn = [ln for ln in md.splitlines() if ln.startswith("| DRNN |")][0]
        assert "5.85±8.93" in drnn and "published value, not reproduced" in drnn
        assert "4.29±6.35" not in md  # the proposed model's row is measured, not copied

    def test_column_order(self, workdir, compared):
        md = (workdir / "cmp.md").read_text()
        header = [ln for ln in md.splitlines() if ln.startswith("| Method |")][0]
        cols = [c.strip() for c in header.strip("|").split("|")]
        assert cols[1:5] == ["SSD (au)", "MAD (au)", "PRD (%)", "Cosine Sim ×100 (%)"]

    def test_self_comparison_dash(self, workdir, compared):
        report, summary, _ = compared
        row = report.row("deepfilter")
        assert all(row.p[k] == "" for k in row.p)
        md = (workdir / "cmp.md").read_text()
        p_table = md.split("## Wilcoxon p-values")[1]
        df_line = [ln for ln in p_table.splitlines() if ln.startswith("| Multibranch LANLD |")][0]
        assert df_line.count("—") == 4

    def test_header_echo(self, workdir, compared):
        rep = read_report(workdir / "cmp.csv")
        assert rep.header["prd_form"] == "printed"
        assert rep.header["data_seed"] == "11"
        assert rep.header["init_seeds"] == "deepfilter:1"
        assert rep.header["config.seed"] == "1"
        assert rep.header["provenance"].startswith("blwbench ")

    def test_same_beats_every_method(self, workdir, compared):
        beats = {m: read_per_beat_csv(workdir / f"cmp.{m}.beats.csv").beats
                 for m in ("deepfilter", "identity", "iir", "fir")}
        assert len({tuple(b) for b in beats.values()}) == 1

    def test_timing_sidecar(self, workdir, compared):
        rows = read_beats(workdir / "cmp.timing.csv")
        assert rows[0] == ["method", "seconds_per_beat"]
        assert all(float(r[1]) > 0 for r in rows[1:])

    def test_deterministic(self, workdir, compared):
        specs = [f"deepfilter={workdir / 'df.ckpt'}", "identity", "iir", "fir"]
        cmd_compare(specs, workdir / "ds.dfds", workdir / "cmp2", config=RunConfig(seed=1))
        for suffix in (".csv", ".md", ".fir.beats.csv", ".deepfilter.beats.csv"):
            assert (workdir / f"cmp{suffix}").read_bytes() == (workdir / f"cmp2{suffix}").read_bytes()

    def test_needs_two_methods(self, workdir, capsys):
        assert main(["compare", "identity", "--dataset", str(workdir / "ds.dfds"),
                     "--out", str(workdir / "one")]) == 2

    def test_cli_compare(self, workdir, capsys):
        code = main(["compare", "identity", "oracle", "--proposed", "oracle",
                     "--dataset", str(workdir / "ds.dfds"), "--out", str(workdir / "cli_cmp")])
        assert code == 0
        rep = read_report(workdir / "cli_cmp.csv")
        p = float(rep.row("identity").p["ssd"])
        assert p < 0.01


class TestReport:
    def test_published_proposed_row(self):
        got = [published_value("deepfilter", k) for k in ("ssd", "mad", "prd", "cos_sim")]
        assert got == [(4.29, 6.35), (0.34, 0.25), (45.35, 29.69), (91.46, 8.61)]

    def test_merge_single_identical(self, workdir):
        cmd_evaluate("identity", workdir / "ds.dfds", workdir / "r_ident")
        cmd_report([str(workdir / "r_ident.csv")], workdir / "merged1")
        assert (workdir / "merged1.csv").read_text() == (workdir / "r_ident.csv").read_text()
        assert (workdir / "merged1.md").read_text() == (workdir / "r_ident.md").read_text()

    def test_merge_order_independent(self, workdir):
        cmd_evaluate("identity", workdir / "ds.dfds", workdir / "m_a")
        cmd_evaluate("iir", workdir / "ds.dfds", workdir / "m_b")
        cmd_report([str(workdir / "m_a.csv"), str(workdir / "m_b.csv")], workdir / "ab")
        cmd_report([str(workdir / "m_b.csv"), str(workdir / "m_a.csv")], workdir / "ba")
        assert (workdir / "ab.csv").read_bytes() == (workdir / "ba.csv").read_bytes()
        merged = read_report(workdir / "ab.csv")
        assert {r.method for r in merged.rows} == {"identity", "iir"}

    def test_conflicting_rows(self, workdir, tmp_path):
        cmd_evaluate("identity", workdir / "ds.dfds", tmp_path / "x")
        text = (tmp_path / "x.csv").read_text()
        row = read_report(tmp_path / "x.csv").row("identity")
        (tmp_path / "y.csv").write_text(text.replace(row.mean["ssd"], "1.5"))
        with pytest.raises(ConsistencyError):
            cmd_report([str(tmp_path / "x.csv"), str(tmp_path / "y.csv")], tmp_path / "z")

    def test_schema_mismatch(self, workdir, tmp_path):
        cmd_evaluate("identity", workdir / "ds.dfds", tmp_path / "x")
        text = (tmp_path / "x.csv").read_text().replace("# schema=1", "# schema=2")
        with pytest.raises(FormatError):
            parse_report_csv(text)


class TestTime:
    def test_identity_positive(self):
        stats = cmd_time("identity", n_beats=20)
        assert stats["median_s"] > 0 and math.isfinite(stats["median_s"])
        assert stats["p95_s"] >= stats["median_s"]

    def test_deepfilter_under_500ms(self, workdir, capsys, tmp_path):
        out = tmp_path / "t.json"
        code = main(["time", "--model", "deepfilter", "--checkpoint", str(workdir / "df.ckpt"),
                     "--n-beats", "15", "--out", str(out)])
        assert code == 0
        stats = json.loads(out.read_text())
        assert 0 < stats["median_s"] < 0.5

    def test_repeat_stable(self, tmp_path):
        checkpoint_save(build_model("deepfilter"), tmp_path / "full.ckpt")
        spec = f"deepfilter={tmp_path / 'full.ckpt'}"
        a = cmd_time(spec, n_beats=30)["median_s"]
        b = cmd_time(spec, n_beats=30)["median_s"]
        assert abs(a - b) < 0.5 * min(a, b)
