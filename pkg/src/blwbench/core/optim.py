"""Adam optimizer and the plateau learning-rate / early-stopping schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..errors import ConfigurationError, NumericError, ShapeError

MIN_LR = 1e-10


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: OptimizerState):
    """Apply one bias-corrected Adam update to ``params`` in place.

    Gradients are validated before anything is modified, so a NaN in any
    parameter leaves every parameter and the optimizer state untouched.
    """
    if not state.learning_rate > 0:
        raise ConfigurationError(f"learning rate must be positive, got {state.learning_rate}")
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


CONTINUE = "continue"
REDUCE_LR = "reduce_lr"
STOP = "stop"


@dataclass
class ScheduleState:
    best_metric: float = math.inf
    epochs_since_improvement: int = 0
    patience_lr: int = 2
    patience_stop: int = 10
    lr_factor: float = 0.5
    min_lr: float = MIN_LR


def plateau_schedule_update(state: ScheduleState, val_metric: float) -> str:
    """Advance the schedule by one epoch.

    An epoch improves only if ``val_metric`` is strictly below the best seen.
    Every ``patience_lr`` stale epochs request a learning-rate cut; once the
    stale count reaches ``patience_stop`` training should stop.
    """
    if not math.isfinite(val_metric):
        raise NumericError(f"monitored metric is not finite: {val_metric}")
    if val_metric < state.best_metric:
        state.best_metric = val_metric
        state.epochs_since_improvement = 0
        return CONTINUE
    state.epochs_since_improvement += 1
    stale = state.epochs_since_improvement
    if stale >= state.patience_stop:
        return STOP
    if stale % state.patience_lr == 0:
        return REDUCE_LR
    return CONTINUE


def reduced_lr(lr, state: ScheduleState):
    return max(lr * state.lr_factor, state.min_lr)
