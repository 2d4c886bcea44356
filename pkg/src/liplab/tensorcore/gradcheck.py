"""Central-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def grad_check(
    f: Callable[..., Tensor],
    inputs: Tensor | Sequence[Tensor],
    eps: float = 1e-5,
    atol: float = 1e-6,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Largest relative error between backprop and central differences.

    ``f`` maps the ``inputs`` tensors to a scalar tensor. For each probed
    coordinate the error is ``|a - n| / max(|a|, |n|, atol)`` where ``a`` is
    the backpropagated and ``n`` the numerical derivative, so derivatives far
    below ``atol`` are judged on absolute error. ``max_coords`` limits the
    number of coordinates probed per input (chosen at random with ``seed``).
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    inputs = list(inputs)
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("grad_check requires float64 tensors")
        t.requires_grad = True
        t.zero_grad()
    out = f(*inputs)
    base = float(out.data)
    if not np.isfinite(base):
        raise ValueError(f"function value is not finite: {base}")
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f(*inputs).data)
            flat[i] = orig - eps
            down = float(f(*inputs).data)
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            ana = a.reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana), abs(num), atol)
            worst = max(worst, err)
    return worst
