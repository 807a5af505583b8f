"""Command-line entry point: prepare, train, evaluate, compare, time, report."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

log = logging.getLogger("blwbench")

MODEL_CHOICES = ("deepfilter", "vanilla-l", "vanilla-nl", "multibranch", "fir", "iir", "identity", "oracle")
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- commands (also usable as library calls) ---------------------------------


def cmd_prepare(out_path, seed=42, synthetic=False, qt_dir=None, nstdb_dir=None, scaling="peak"):
    from .data import prepare_qt, prepare_synthetic, write_dataset
    from .errors import ConfigurationError

    if synthetic:
        ds = prepare_synthetic(seed, scaling=scaling)
    else:
        if not qt_dir or not nstdb_dir:
            raise ConfigurationError("give --qt-dir and --nstdb-dir, or --synthetic")
        ds = prepare_qt(qt_dir, nstdb_dir, seed=seed, scaling=scaling)
    write_dataset(ds, out_path)
    return ds.counts()


def cmd_train(config, dataset_path, checkpoint_out, log_path=None, progress=None):
    import numpy as np

    from .data import read_dataset
    from .models import build_model
    from .train import format_config, train_model

    ds = read_dataset(dataset_path)
    train, val = ds.subset("train"), ds.subset("val")
    model = build_model(config.model, seed=config.seed, dtype=np.dtype(config.dtype))
    log_path = log_path or f"{checkpoint_out}.log.csv"
    result = train_model(model, train.noisy, train.clean, val.noisy, val.clean, config,
                         log_path=log_path, checkpoint_path=checkpoint_out, progress=progress)
    with open(f"{checkpoint_out}.config", "w") as fh:
        fh.write(format_config(config))
    return result


def _load_method(spec):
    """``name`` or ``name=checkpoint`` -> (label, model or None)."""
    from .evaluate import BASELINES, CLASSICAL
    from .errors import ConfigurationError
    from .models import checkpoint_load, normalize_kind

    name, _, ckpt = spec.partition("=")
    if name in CLASSICAL + BASELINES:
        return name, None
    kind = normalize_kind(name)
    if not ckpt:
        raise ConfigurationError(f"model {name!r} needs a checkpoint ({name}=PATH)")
    return kind, checkpoint_load(ckpt, expected_kind=kind)


def cmd_evaluate(method_spec, dataset_path, out_stem, prd_form="printed", original_length=False):
    from .data import read_dataset
    from .evaluate import evaluate, write_per_beat_csv
    from .metrics import aggregate_summary
    from .report import build_report, provenance, write_report

    name, model = _load_method(method_spec)
    ds = read_dataset(dataset_path)
    result = evaluate(name, ds, model=model, prd_form=prd_form, original_length=original_length)
    write_per_beat_csv(result, f"{out_stem}.beats.csv")
    summary = aggregate_summary({name: result.metrics}, {name: result.beats})
    header = {"prd_form": prd_form, "window": result.info["window"],
              "data_seed": ds.metadata.get("seed", ""),
              "provenance": provenance(_sha256(dataset_path))}
    if "protocol" in result.info:
        header["classical_protocol"] = result.info["protocol"]
    if model is not None:
        header["init_seed"] = model.metadata.get("seed", "")
    write_report(build_report(summary, header, include_published=False), out_stem)
    return result


def cmd_compare(method_specs, dataset_path, out_stem, proposed="deepfilter", prd_form="printed",
                original_length=False, config=None):
    """Evaluate every method on the same test beats and write the comparison table.

    Per-beat inference time goes to ``<out_stem>.timing.csv`` so the primary
    report stays byte-reproducible.
    """
    from .data import read_dataset
    from .errors import ConfigurationError
    from .evaluate import evaluate, write_per_beat_csv
    from .metrics import aggregate_summary
    from .report import build_report, provenance, write_report

    if len(method_specs) < 2:
        raise ConfigurationError("compare needs at least two methods")
    ds = read_dataset(dataset_path)
    metrics, beats, timing, seeds = {}, {}, {}, {}
    for spec in method_specs:
        name, model = _load_method(spec)
        if name in metrics:
            raise ConfigurationError(f"method {name!r} given twice")
        result = evaluate(name, ds, model=model, prd_form=prd_form, original_length=original_length)
        write_per_beat_csv(result, f"{out_stem}.{name}.beats.csv")
        metrics[name], beats[name] = result.metrics, result.beats
        timing[name] = result.seconds / len(result.beats)
        if model is not None:
            seeds[name] = model.metadata.get("seed", "")
    summary = aggregate_summary(metrics, beats, proposed=proposed if proposed in metrics else None)
    header = {"prd_form": prd_form, "window": "original" if original_length else "full",
              "data_seed": ds.metadata.get("seed", ""), "data_source": ds.metadata.get("source", ""),
              "init_seeds": ",".join(f"{k}:{v}" for k, v in sorted(seeds.items())),
              "classical_protocol": "concatenated per-record stream",
              "provenance": provenance(_sha256(dataset_path))}
    if config is not None:
        header.update({f"config.{k}": v for k, v in config.echo().items() if k != "model"})
    report = build_report(summary, header)
    paths = write_report(report, out_stem)
    with open(f"{out_stem}.timing.csv", "w") as fh:
        fh.write("method,seconds_per_beat\n")
        for k in sorted(timing):
            fh.write(f"{k},{timing[k]!r}\n")
    return report, summary, paths


def cmd_time(method_spec, n_beats=100, dataset_path=None, seed=0):
    """Median and p95 wall-clock seconds per single-beat call over warm runs."""
    import time

    import numpy as np

    from .data import read_dataset
    from .evaluate import apply_method

    name, model = _load_method(method_spec)
    if dataset_path:
        ds = read_dataset(dataset_path)
        ds = ds.subset("test") if len(ds.subset("test")) else ds
    else:
        from .data import prepare_synthetic
        ds = prepare_synthetic(seed, n_records=2, beats_per_record=20, n_test_records=1)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(ds), size=n_beats + 3)
    times = []
    for j, i in enumerate(picks):
        one = ds.take([i])
        t0 = time.perf_counter()
        apply_method(name, one, model)
        dt = time.perf_counter() - t0
        if j >= 3:  # warm-up calls are discarded
            times.append(dt)
    times = np.array(times)
    return {"method": name, "n_beats": int(n_beats), "median_s": float(np.median(times)),
            "p95_s": float(np.percentile(times, 95))}


def cmd_report(inputs, out_stem):
    from .report import merge_reports, read_report, write_report

    merged = merge_reports([read_report(p) for p in sorted(inputs)])
    return write_report(merged, out_stem)


# -- argument parsing ----------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="blwbench", description="Baseline wander removal benchmark")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="build the prepared dataset file")
    sp.add_argument("--synthetic", action="store_true")
    sp.add_argument("--qt-dir")
    sp.add_argument("--nstdb-dir")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--scaling", choices=("peak", "peak_to_peak"), default="peak")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("train", help="train one model")
    sp.add_argument("--config")
    sp.add_argument("--model", choices=MODEL_CHOICES[:4])
    sp.add_argument("--dataset")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--max-epochs", type=int)
    sp.add_argument("--out", required=True, help="checkpoint path")

    for name in ("evaluate", "time"):
        sp = sub.add_parser(name, help="score one method" if name == "evaluate" else "per-beat latency")
        sp.add_argument("--model", choices=MODEL_CHOICES, required=True)
        sp.add_argument("--checkpoint")
        sp.add_argument("--dataset", required=(name == "evaluate"))
        if name == "evaluate":
            sp.add_argument("--out", required=True, help="output path stem")
            sp.add_argument("--prd-form", choices=("printed", "conventional"), default="printed")
            sp.add_argument("--original-length", action="store_true")
        else:
            sp.add_argument("--n-beats", type=int, default=100)
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--out")

    sp = sub.add_parser("compare", help="benchmark table over several methods")
    sp.add_argument("methods", nargs="+", help="NAME or NAME=CHECKPOINT")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--proposed", default="deepfilter")
    sp.add_argument("--config")
    sp.add_argument("--prd-form", choices=("printed", "conventional"), default="printed")
    sp.add_argument("--original-length", action="store_true")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("report", help="merge report CSVs")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out", required=True)
    return p


def _method_spec(args):
    name = args.model.replace("-", "_")
    if args.checkpoint:
        return f"{name}={args.checkpoint}"
    return name


def _run(args):
    from .train import RunConfig, load_config

    if args.command == "prepare":
        counts = cmd_prepare(args.out, seed=args.seed, synthetic=args.synthetic, qt_dir=args.qt_dir,
                             nstdb_dir=args.nstdb_dir, scaling=args.scaling)
        print(" ".join(f"{k}={v}" for k, v in counts.items()))
    elif args.command == "train":
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.model:
            cfg.model = args.model
        if args.seed is not None:
            cfg.seed = args.seed
        if args.max_epochs is not None:
            cfg.max_epochs = args.max_epochs
        if args.dataset:
            cfg.dataset = args.dataset
        if not cfg.dataset:
            from .errors import ConfigurationError
            raise ConfigurationError("no dataset given (--dataset or dataset= in the config)")
        result = cmd_train(cfg, cfg.dataset, args.out)
        print(f"epochs={result.epochs_run} best_epoch={result.best_epoch} "
              f"best_val_ssd={result.best_val_ssd!r} stop={result.stop_reason}")
    elif args.command == "evaluate":
        result = cmd_evaluate(_method_spec(args), args.dataset, args.out, args.prd_form, args.original_length)
        print(f"method={result.method} beats={len(result.beats)} "
              f"mean_ssd={float(result.metrics['ssd'].mean())!r}")
    elif args.command == "compare":
        cfg = load_config(args.config) if args.config else None
        _, summary, paths = cmd_compare([m.replace("-", "_") for m in args.methods], args.dataset, args.out,
                                        proposed=args.proposed.replace("-", "_"), prd_form=args.prd_form,
                                        original_length=args.original_length, config=cfg)
        print(" ".join(paths))
    elif args.command == "time":
        stats = cmd_time(_method_spec(args), args.n_beats, args.dataset, args.seed)
        line = json.dumps(stats, sort_keys=True)
        print(line)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(line + "\n")
    elif args.command == "report":
        print(" ".join(cmd_report(args.inputs, args.out)))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "time" and "numpy" not in sys.modules:
        for var in _THREAD_VARS:
            os.environ[var] = "1"
    from .errors import BenchError

    try:
        _run(args)
    except BenchError as exc:
        print(f"error: code={exc.code} type={type(exc).__name__} message={json.dumps(str(exc))}",
              file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: code=io type={type(exc).__name__} path={json.dumps(str(exc.filename))} "
              f"message={json.dumps(exc.strerror or str(exc))}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
