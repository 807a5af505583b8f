"""One test per acceptance criterion; each prints a PASS/FAIL/SKIP line.

The synthetic benchmark trains four full-size models and takes most of an
hour on one core.  Set ``BLWBENCH_ACCEPTANCE_DIR`` to keep its artifacts.
``BLWBENCH_QT_DIR`` and ``BLWBENCH_NSTDB_DIR`` enable the real-data run.
"""

import os
import time

import numpy as np
import pytest

from blwbench.cli import cmd_compare, cmd_prepare, cmd_time, cmd_train
from blwbench.core import ConvParams, Tensor, conv1d, grad_check
from blwbench.data import parse_annotations, prepare_synthetic, read_adu, read_dataset
from blwbench.data.wfdb import parse_header
from blwbench.errors import InsufficientDataError
from blwbench.filters import (
    design_fir_highpass,
    design_iir_butterworth_highpass,
    frequency_response,
    zero_phase_filter,
)
from blwbench.metrics import compute_metrics, cos_sim, loss_filtering, mad, ssd, wilcoxon_signed_rank
from blwbench.models import ConvLayer, MklanlModule, build_model, checkpoint_save, parameter_count
from blwbench.train import RunConfig, train_model
from test_core import brute_conv
from test_metrics import enumeration_p

FS = 360.0
MODELS = ("deepfilter", "multibranch", "vanilla_nl", "vanilla_l")


def jitter(fragment, rng, scale=0.1):
    for t in fragment.parameters().values():
        t.data += rng.normal(0, scale, t.data.shape)
    return fragment


def test_gradient_correctness(criterion):
    with criterion("gradient correctness (< 1e-4 relative, float64)") as note:
        t0 = time.perf_counter()
        rng = np.random.default_rng(0)
        errors = {}
        for act in ("linear", "relu"):
            for k in (3, 5, 9, 15):
                for r in (0, 3):
                    layer = jitter(ConvLayer("c", 3, 4, k, r, act, rng=rng), rng)
                    errors[f"conv/{act}/k{k}/r{r}"] = grad_check(layer, rng.standard_normal((2, 3, 20)))
        for r in (0, 3):
            module = jitter(MklanlModule("m", 2, 16, r, rng=rng), rng)
            errors[f"mklanl/r{r}"] = grad_check(module, rng.standard_normal((2, 2, 24)))
        for kind in MODELS:
            model = jitter(build_model(kind, widths=(8,) * 6, input_length=32, seed=1), rng, 0.05)
            errors[kind] = grad_check(model, rng.standard_normal((2, 1, 32)))
        elapsed = time.perf_counter() - t0
        worst = max(errors, key=errors.get)
        note(f"{len(errors)} fragments, worst {worst} = {errors[worst]:.2e}, {elapsed:.1f} s")
        assert errors[worst] < 1e-4
        assert elapsed < 60


def test_conv_oracle(criterion):
    with criterion("conv1d equals direct-sum oracle (200 cases, 1e-12)") as note:
        rng = np.random.default_rng(1)
        combos = [(k, r) for k in (3, 5, 9, 15) for r in (0, 1, 3)]
        worst = 0.0
        for case in range(200):
            k, r = combos[case % len(combos)]
            b, c_in, c_out, n = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 48)
            x = rng.standard_normal((b, c_in, n))
            w = rng.standard_normal((c_out, c_in, k))
            bias = rng.standard_normal(c_out)
            got = conv1d(x, ConvParams(Tensor(w), Tensor(bias), r))
            worst = max(worst, float(np.max(np.abs(got - brute_conv(x, w, bias, r)))))
        note(f"max abs diff {worst:.1e}")
        assert worst <= 1e-12


def test_dilation_zero_stuffing(criterion):
    with criterion("dilation equals zero-stuffed kernel; deepfilter/multibranch counts equal") as note:
        rng = np.random.default_rng(2)
        for _ in range(100):
            k = int(rng.choice([3, 5, 9, 15]))
            r = int(rng.integers(0, 5))
            x = rng.integers(-9, 9, size=(2, 2, int(rng.integers(1, 64)))).astype(float)
            w = rng.integers(-5, 5, size=(3, 2, k)).astype(float)
            stuffed = np.zeros((3, 2, (k - 1) * (r + 1) + 1))
            stuffed[:, :, ::r + 1] = w
            zero = Tensor(np.zeros(3))
            assert np.array_equal(conv1d(x, ConvParams(Tensor(w), zero, r)),
                                  conv1d(x, ConvParams(Tensor(stuffed), zero, 0)))
        counts = {kind: parameter_count(build_model(kind)) for kind in ("deepfilter", "multibranch")}
        note(f"100 exact cases, parameters {counts}")
        assert counts["deepfilter"] == counts["multibranch"]


def test_filter_designs(criterion):
    with criterion("FIR/IIR designs and zero-lag forward-backward filtering") as note:
        fir = design_fir_highpass()
        iir = design_iir_butterworth_highpass()
        spec = np.abs(np.fft.rfft(fir.taps, 12000))  # 0.03 Hz bins: 0.3 Hz -> 10, 1.5 Hz -> 50
        att = -20 * np.log10(spec[10])
        pass_db = 20 * np.log10(spec[50])
        h_cut = abs(frequency_response(iir, 0.67)[0])
        lags = {}
        n = 20001
        t = (np.arange(n) - n // 2) / FS
        pulse = np.exp(-0.5 * (t / 0.02) ** 2)
        mid = slice(n // 2 - 2000, n // 2 + 2001)
        for d in (fir, iir):
            y = zero_phase_filter(d, pulse)
            xc = np.correlate(y[mid], pulse[mid], mode="full")
            lags[d.kind] = int(np.argmax(xc)) - (len(pulse[mid]) - 1)
        note(f"FIR taps {fir.numtaps} beta {fir.kaiser_beta:.3f}, {att:.1f} dB at 0.3 Hz, {pass_db:+.3f} dB at 1.5 Hz; "
             f"IIR order {iir.order} |H(0.67)| {h_cut:.5f}; lags {lags}")
        assert fir.numtaps == 8079 and abs(fir.kaiser_beta - 2.18) < 0.01 and fir.cutoff_hz == 0.67
        assert att >= 30 and abs(pass_db) <= 0.5
        assert iir.order == 4 and abs(h_cut - 1 / np.sqrt(2)) <= 1e-3
        assert lags == {fir.kind: 0, iir.kind: 0}


def test_metric_identities(criterion):
    with criterion("metric identities and Wilcoxon vs enumeration (n <= 10)") as note:
        s = np.array([1.0, 2.0, 3.0])
        r = compute_metrics(s, s)
        assert (r.ssd, r.mad, r.prd) == (0, 0, 0) and r.cos_sim == pytest.approx(1.0)
        assert cos_sim([1, 0], [0, 1]) == 0
        r = compute_metrics(s, [1, 1, 1])
        assert r.ssd == 5 and r.mad == 2 and r.prd == pytest.approx(np.sqrt(5 / 3) * 100)
        assert loss_filtering(np.array([1.0, 2.0]), np.zeros(2), 50) == 205
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b = rng.standard_normal((2, int(rng.integers(2, 30))))
            c, scale = rng.normal(0, 3), rng.uniform(0.1, 10)
            assert loss_filtering(a, a, rng.uniform(0, 100)) == 0
            assert loss_filtering(a, b, 0) == pytest.approx(ssd(a, b), rel=1e-14)
            perm = rng.permutation(len(a))
            assert loss_filtering(a, b) == pytest.approx(loss_filtering(a[perm], b[perm]), rel=1e-12)
            assert cos_sim(a, scale * a) == pytest.approx(1.0) and cos_sim(a, -scale * a) == pytest.approx(-1.0)
            assert ssd(a, b + c) == pytest.approx(float(np.sum((b + c - a) ** 2)), rel=1e-12)
            assert mad(a, b + c) == pytest.approx(float(np.max(np.abs(b + c - a))), rel=1e-12)
            assert (ssd(a, b) == 0) == (mad(a, b) == 0) == bool(np.array_equal(a, b))

        checked = 0
        for n in range(1, 11):
            for _ in range(25):
                a = rng.integers(-5, 6, n)
                b = rng.integers(-5, 6, n)
                if np.count_nonzero(a - b) < 5:
                    with pytest.raises(InsufficientDataError):
                        wilcoxon_signed_rank(a, b)
                    continue
                assert wilcoxon_signed_rank(a, b) == pytest.approx(enumeration_p(a, b), abs=1e-12)
                checked += 1
        note(f"identities on 200 random pairs; {checked} Wilcoxon cases match enumeration")
        assert checked >= 50


def test_overfit_smoke(criterion):
    with criterion("overfit smoke test (32 beats, loss < 5% of epoch 1 within 200 epochs)") as note:
        ds = prepare_synthetic(seed=7, n_records=8, beats_per_record=5, n_test_records=1)
        part = ds.take(np.arange(32))
        model = build_model("deepfilter", seed=0)
        result = train_model(model, part.noisy, part.clean, part.noisy, part.clean, RunConfig(max_epochs=200))
        first, final = result.history[0].train_loss, result.history[-1].train_loss
        note(f"epoch 1 loss {first:.2f}, final loss {final:.2f} ({100 * final / first:.2f}%) "
             f"after {result.epochs_run} epochs ({result.stop_reason})")
        assert result.epochs_run <= 200
        assert final < 0.05 * first


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    path = os.environ.get("BLWBENCH_ACCEPTANCE_DIR")
    if path:
        os.makedirs(path, exist_ok=True)
        return path
    return str(tmp_path_factory.mktemp("bench"))


def test_synthetic_benchmark_ordering(criterion, bench_dir):
    with criterion("synthetic benchmark ordering (full protocol, >= 2000 beats)") as note:
        t0 = time.perf_counter()
        dataset = os.path.join(bench_dir, "synthetic.dfds")
        counts = cmd_prepare(dataset, seed=42, synthetic=True)
        assert sum(counts.values()) >= 2000
        specs, epochs = [], {}
        for kind in MODELS:
            ckpt = os.path.join(bench_dir, f"{kind}.ckpt")
            result = cmd_train(RunConfig(model=kind, dataset=dataset), dataset, ckpt)
            epochs[kind] = result.epochs_run
            specs.append(f"{kind}={ckpt}")
        _, summary, _ = cmd_compare(specs + ["iir", "fir"], dataset, os.path.join(bench_dir, "compare"),
                                    config=RunConfig(dataset=dataset))
        mean = {m: summary.methods[m].mean["ssd"] for m in summary.methods}
        p = summary.p_values["multibranch"]["ssd"]
        minutes = (time.perf_counter() - t0) / 60
        note(", ".join(f"{m} {mean[m]:.3f}" for m in (*MODELS, "iir", "fir")) +
             f"; p(deepfilter vs multibranch) {p:.2e}; epochs {epochs}; {minutes:.0f} min")
        assert mean["deepfilter"] < mean["multibranch"] < mean["vanilla_nl"] < mean["vanilla_l"]
        assert mean["deepfilter"] < mean["iir"] < mean["fir"]
        assert p is not None and p < 0.01


def test_full_reproduction(criterion, tmp_path):
    with criterion("full reproduction on QT/NSTDB (optional)") as note:
        qt, nstdb = os.environ.get("BLWBENCH_QT_DIR"), os.environ.get("BLWBENCH_NSTDB_DIR")
        if not (qt and nstdb):
            pytest.skip("BLWBENCH_QT_DIR / BLWBENCH_NSTDB_DIR not set")
        dataset = str(tmp_path / "qt.dfds")
        cmd_prepare(dataset, seed=42, qt_dir=qt, nstdb_dir=nstdb)
        ckpt = str(tmp_path / "deepfilter.ckpt")
        cmd_train(RunConfig(dataset=dataset), dataset, ckpt)
        _, summary, _ = cmd_compare([f"deepfilter={ckpt}", "iir", "fir"], dataset, str(tmp_path / "cmp"))
        df = summary.methods["deepfilter"].mean
        note(f"deepfilter SSD {df['ssd']:.2f} PRD {df['prd']:.2f}")
        assert 2 <= df["ssd"] <= 9 and 30 <= df["prd"] <= 65
        for other in ("iir", "fir"):
            o = summary.methods[other].mean
            assert df["ssd"] < o["ssd"] and df["mad"] < o["mad"] and df["prd"] < o["prd"]
            assert df["cos_sim"] > o["cos_sim"]


def test_pipeline_determinism(criterion, tmp_path):
    with criterion("synthetic prepare byte-reproducible; format 212 and annotation fixtures") as note:
        a, b = str(tmp_path / "a.dfds"), str(tmp_path / "b.dfds")
        cmd_prepare(a, seed=42, synthetic=True)
        cmd_prepare(b, seed=42, synthetic=True)
        with open(a, "rb") as fa, open(b, "rb") as fb:
            same = fa.read() == fb.read()
        header = parse_header("r 1 360 2\nr.dat 212 200 12 0\n")
        adu = read_adu(header, bytes([0xE8, 0x3F, 0x10]))[0].tolist()
        # 0x7FF / 0x800 at the 12-bit limits, in both nibble positions
        header4 = parse_header("r 1 360 4\nr.dat 212 200 12 0\n")
        limits = read_adu(header4, bytes([0xFF, 0x87, 0x00, 0x00, 0xF8, 0xFF]))[0].tolist()
        anns = [(x.sample, x.code) for x in parse_annotations(bytes([0x05, 0x04, 0x07, 0x04, 0, 0]))]
        note(f"{len(read_dataset(a))} beats, identical={same}; 212 {adu} {limits}; annotations {anns}")
        assert same
        assert adu == [-24, 784]
        assert limits == [2047, -2048, -2048, -1]
        assert anns == [(5, 1), (12, 1)]


def test_inference_latency(criterion, tmp_path):
    with criterion("deepfilter single-beat inference median < 500 ms") as note:
        ckpt = str(tmp_path / "df.ckpt")
        checkpoint_save(build_model("deepfilter"), ckpt)
        stats = cmd_time(f"deepfilter={ckpt}", n_beats=50)
        note(f"median {1000 * stats['median_s']:.1f} ms, p95 {1000 * stats['p95_s']:.1f} ms")
        assert 0 < stats["median_s"] < 0.5
