"""Adam optimizer and reduce-on-plateau learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, StructuralError


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 0.001

    @classmethod
    def init(cls, params, lr=0.001):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], lr=lr)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place; aborted on non-finite gradients."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise StructuralError("params, grads and state must have equal lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise StructuralError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient; step aborted")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


class PlateauScheduler:
    """Scale lr by ``factor`` after ``patience`` consecutive non-improving epochs.

    An epoch improves when validation loss beats the best seen so far by more
    than ``threshold`` (absolute). The counter resets after each reduction.
    """

    def __init__(self, lr, factor=0.3, patience=10, threshold=1e-6):
        if not (0.0 < factor < 1.0):
            raise ValueError(f"factor must be in (0, 1), got {factor}")
        if patience < 1:
            raise ValueError(f"patience must be >= 1, got {patience}")
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, val_loss):
        if val_loss < self.best - self.threshold:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


def lr_plateau_update(history, lr, factor=0.3, patience=10, threshold=1e-6):
    """Replay a validation-loss history from initial ``lr``; returns the final lr."""
    sched = PlateauScheduler(lr, factor=factor, patience=patience, threshold=threshold)
    for v in history:
        sched.step(v)
    return sched.lr
