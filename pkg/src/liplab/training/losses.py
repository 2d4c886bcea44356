"""MSE, Pearson correlation and their combination (CorrMSE).

``corrmse(y, yhat, lam) = lam * mse(y, yhat) - pearson(y, yhat)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..tensorcore import Tensor
from ..tensorcore.tensor import ShapeError, make_result

LOSS_KINDS = ("mse", "corr", "corrmse")
# below this variance the correlation term is treated as undefined
DEGENERATE_VAR = 1e-12


class DegenerateCorrelationWarning(RuntimeWarning):
    """The prediction (or target) is constant, so only the MSE term is used."""


@dataclass(frozen=True)
class LossSpec:
    kind: str = "corrmse"
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"loss lambda must be a finite value >= 0, got {self.lam}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        unknown = set(d) - {"kind", "lambda"}
        if unknown:
            raise ValueError(f"unknown loss keys: {sorted(unknown)}")
        return cls(d.get("kind", "corrmse"), float(d.get("lambda", 1.0)))


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.ndim != 1 or y.shape != yhat.shape:
        raise ShapeError(f"expected two vectors of equal length, got {y.shape} and {yhat.shape}")
    if y.size < 2:
        raise ValueError("need at least 2 elements")
    return y, yhat


def mse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def pearson(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    dy, dh = y - y.mean(), yhat - yhat.mean()
    syy, shh = float(dy @ dy), float(dh @ dh)
    if syy <= DEGENERATE_VAR * y.size or shh <= DEGENERATE_VAR * y.size:
        raise ValueError("pearson correlation is undefined for a zero-variance input")
    return float(np.clip((dy @ dh) / np.sqrt(syy * shh), -1.0, 1.0))


def _row_terms(y: np.ndarray, yhat: np.ndarray):
    """Row-wise MSE, Pearson and their gradients w.r.t. ``yhat`` for (N, D) inputs.

    Rows where either side has variance below the threshold get r = 0, dr = 0
    and are flagged.
    """
    n = y.shape[1]
    diff = yhat - y
    m = np.mean(diff * diff, axis=1)
    dm = (2.0 / n) * diff
    dy = y - y.mean(axis=1, keepdims=True)
    dh = yhat - yhat.mean(axis=1, keepdims=True)
    syy = np.einsum("ij,ij->i", dy, dy)
    shh = np.einsum("ij,ij->i", dh, dh)
    degenerate = (syy <= DEGENERATE_VAR * n) | (shh <= DEGENERATE_VAR * n)
    syy_s = np.where(degenerate, 1.0, syy)
    shh_s = np.where(degenerate, 1.0, shh)
    norm = np.sqrt(syy_s * shh_s)
    r = np.where(degenerate, 0.0, np.einsum("ij,ij->i", dy, dh) / norm)
    dr = dy / norm[:, None] - (r / shh_s)[:, None] * dh
    dr[degenerate] = 0.0
    return m, dm, r, dr, degenerate


def _combine(kind: str, lam: float, m, dm, r, dr):
    if kind == "mse":
        return m, dm
    if kind == "corr":
        return -r, -dr
    return lam * m - r, lam * dm - dr


def corrmse(y, yhat, lam: float = 1.0) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to ``yhat``.

    If ``yhat`` is (numerically) constant the correlation is undefined; the
    MSE term alone is returned and a :class:`DegenerateCorrelationWarning` is
    emitted.
    """
    y, yhat = _pair(y, yhat)
    if np.var(y) <= DEGENERATE_VAR:
        raise ValueError("corrmse needs a target with nonzero variance")
    m, dm, r, dr, degenerate = _row_terms(y[None], yhat[None])
    if degenerate[0]:
        warnings.warn("constant prediction: correlation term dropped", DegenerateCorrelationWarning, stacklevel=2)
    loss, grad = _combine("corrmse", lam, m, dm, r, dr)
    return float(loss[0]), grad[0]


def batch_loss(pred: Tensor, target: np.ndarray, spec: LossSpec) -> tuple[Tensor, int]:
    """Per-row loss averaged over the batch, as a differentiable scalar.

    Returns the loss tensor and the number of rows whose correlation term was
    dropped because one side was constant.
    """
    if pred.ndim != 2 or pred.shape != np.shape(target):
        raise ShapeError(f"loss expects matching (N, D) arrays, got {pred.shape} and {np.shape(target)}")
    y = np.asarray(target, dtype=np.float64)
    m, dm, r, dr, degenerate = _row_terms(y, pred.data.astype(np.float64))
    losses, grads = _combine(spec.kind, spec.lam, m, dm, r, dr)
    n_rows = pred.shape[0]
    grad = (grads / n_rows).astype(pred.dtype)

    def backward(g):
        pred._accumulate(grad * g)

    out = make_result(np.asarray(losses.mean(), dtype=pred.dtype), (pred,), backward)
    return out, int(degenerate.sum()) if spec.kind != "mse" else 0


def loss_value(pred: np.ndarray, target: np.ndarray, spec: LossSpec) -> float:
    """Batch-mean loss without building a graph."""
    y = np.asarray(target, dtype=np.float64)
    m, dm, r, dr, _ = _row_terms(y, np.asarray(pred, dtype=np.float64))
    return float(_combine(spec.kind, spec.lam, m, dm, r, dr)[0].mean())
