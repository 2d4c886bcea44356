"""Adam (with L2 added to the gradient) and a reduce-on-plateau learning-rate rule."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ..tensorcore.tensor import ShapeError


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    l2: Mapping[str, float] | None = None,
) -> AdamState:
    """One bias-corrected Adam step, updating ``params`` arrays in place.

    Parameters missing from ``grads`` are left alone (their moments are not
    advanced). ``l2[name]`` adds ``2 * l2 * w`` to that gradient first.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    l2 = l2 or {}
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    t = state.t + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, g in grads.items():
        w = params[name]
        coef = l2.get(name, 0.0)
        if coef:
            g = g + (2.0 * coef) * w
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        w -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(w.dtype)
    state.t = t
    return state


@dataclass(frozen=True)
class PlateauState:
    lr: float
    best: float = float("inf")
    wait: int = 0
    patience: int = 4
    factor: float = 5.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.patience < 1 or self.factor < 1:
            raise ValueError("patience must be >= 1 and factor >= 1")


def plateau_update(state: PlateauState, val_loss: float) -> PlateauState:
    """Divide the learning rate by ``factor`` after ``patience`` epochs
    without a strict improvement of the validation loss."""
    if not np.isfinite(val_loss):
        raise ValueError(f"validation loss must be finite, got {val_loss}")
    if val_loss < state.best:
        return replace(state, best=float(val_loss), wait=0)
    wait = state.wait + 1
    if wait >= state.patience:
        return replace(state, lr=state.lr / state.factor, wait=0)
    return replace(state, wait=wait)
