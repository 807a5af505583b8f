"""Training protocol: batched Adam on the filtering loss with plateau scheduling."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, fields
from typing import Callable, List, Optional

import numpy as np

from .core.optim import (
    MIN_LR,
    REDUCE_LR,
    STOP,
    OptimizerState,
    ScheduleState,
    adam_step,
    plateau_schedule_update,
    reduced_lr,
)
from .errors import ConfigurationError, NumericError
from .metrics import DEFAULT_LAMBDA, loss_and_grad
from .models.checkpoint import checkpoint_save

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    model: str = "deepfilter"
    batch_size: int = 32
    initial_lr: float = 1e-3
    lam: float = DEFAULT_LAMBDA
    max_epochs: int = 100_000
    patience_lr: int = 2
    patience_stop: int = 10
    min_lr: float = MIN_LR
    seed: int = 42
    data_seed: int = 42
    dataset: str = ""
    prd_form: str = "printed"
    deterministic: bool = True
    dtype: str = "float64"

    def echo(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(kind, raw):
    if kind in (bool, "bool"):
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"not a boolean: {raw!r}")
    if kind in (int, "int"):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw


def parse_config(text, base=None):
    """Parse flat ``key = value`` lines (``#`` starts a comment) over ``base``."""
    cfg = base if base is not None else RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in types:
            raise ConfigurationError(f"config line {lineno}: unknown or malformed entry {line!r}")
        try:
            setattr(cfg, key, _coerce(types[key], value.strip()))
        except ValueError as exc:
            raise ConfigurationError(f"config line {lineno}: {exc}") from None
    return cfg


def load_config(path, base=None):
    with open(path) as fh:
        return parse_config(fh.read(), base)


def format_config(cfg: RunConfig):
    return "".join(f"{k} = {v}\n" for k, v in cfg.echo().items())


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_ssd: float
    lr: float
    saved: bool
    seconds: float


@dataclass
class TrainResult:
    history: List[EpochLog]
    best_epoch: int
    best_val_ssd: float
    stop_reason: str

    @property
    def epochs_run(self):
        return len(self.history)


def mean_ssd(model, noisy, clean, batch_size=64):
    pred = model.predict(noisy[:, None, :], batch_size=batch_size)[:, 0, :]
    d = pred - clean
    return float(np.mean(np.sum(d * d, axis=1)))


def train_model(model, train_noisy, train_clean, val_noisy, val_clean, config: RunConfig,
                log_path=None, checkpoint_path=None, monitor: Optional[Callable] = None,
                progress: Optional[Callable] = None):
    """Fit ``model`` in place and leave it holding the best-validation weights.

    ``monitor(model, epoch)`` may replace the validation-SSD metric (used by
    tests to drive the schedule).  Returns a :class:`TrainResult`.
    """
    if config.batch_size < 1:
        raise ConfigurationError("batch size must be >= 1")
    dtype = next(iter(model.parameters().values())).data.dtype
    x = np.asarray(train_noisy, dtype=dtype)
    y = np.asarray(train_clean, dtype=dtype)
    val_noisy = np.asarray(val_noisy, dtype=dtype)
    if len(x) == 0:
        raise ConfigurationError("training set is empty")
    rng = np.random.default_rng(config.seed)
    opt = OptimizerState(learning_rate=config.initial_lr)
    sched = ScheduleState(patience_lr=config.patience_lr, patience_stop=config.patience_stop,
                          min_lr=config.min_lr)
    params = {name: t.data for name, t in model.parameters().items()}
    best = None
    best_epoch = 0
    history = []
    stop_reason = "max_epochs"

    writer = fh = None
    if log_path:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_ssd", "lr", "saved"])
    try:
        for epoch in range(1, config.max_epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(x))
            total = 0.0
            for step, start in enumerate(range(0, len(x), config.batch_size)):
                idx = order[start:start + config.batch_size]
                model.zero_grad()
                pred = model.forward(x[idx, None, :])
                loss, grad = loss_and_grad(y[idx, None, :], pred, config.lam)
                if not math.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch}, step {step}")
                model.backward(grad)
                grads = {name: t.grad for name, t in model.parameters().items()}
                adam_step(params, grads, opt)
                total += loss * len(idx)
            train_loss = total / len(x)
            lr_used = opt.learning_rate

            if monitor is not None:
                val = float(monitor(model, epoch))
            else:
                val = mean_ssd(model, val_noisy, val_clean)
            improved = val < sched.best_metric
            action = plateau_schedule_update(sched, val)
            if improved:
                best = {name: p.copy() for name, p in params.items()}
                best_epoch = epoch
                if checkpoint_path:
                    checkpoint_save(model, checkpoint_path, {"epoch": epoch, "best_val_ssd": val,
                                                             "seed": config.seed})
            entry = EpochLog(epoch, train_loss, val, lr_used, improved, time.perf_counter() - t0)
            history.append(entry)
            if writer:
                writer.writerow([epoch, repr(train_loss), repr(val), repr(lr_used), int(improved)])
                fh.flush()
            if progress:
                progress(entry)
            log.info("epoch %d loss %.5g val_ssd %.5g lr %.3g%s", epoch, train_loss, val, lr_used,
                     " *" if improved else "")
            if action == STOP:
                stop_reason = "early_stop"
                break
            if action == REDUCE_LR:
                opt.learning_rate = reduced_lr(opt.learning_rate, sched)
    finally:
        if fh:
            fh.close()
    if best is not None:
        for name, p in params.items():
            p[...] = best[name]
    model.metadata.update({"epoch": best_epoch, "best_val_ssd": sched.best_metric, "seed": config.seed})
    return TrainResult(history, best_epoch, sched.best_metric, stop_reason)
