"""Differentiable operations used by the two networks.

Every op checks operand shapes up front and raises :class:`ShapeError`
instead of broadcasting. ``mode`` arguments are ``"train"`` or ``"infer"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import ShapeError, Tensor, as_tensor, make_result

MODES = ("train", "infer")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


# --------------------------------------------------------------------- linear


def dense(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``x @ W + b`` for ``x: (N, I)``, ``W: (I, O)``, ``b: (O,)``."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.ndim != 2 or W.ndim != 2 or b.ndim != 1:
        raise ShapeError(f"dense expects (N,I),(I,O),(O,); got {x.shape},{W.shape},{b.shape}")
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeError(f"dense: inner dimensions disagree {x.shape} @ {W.shape} + {b.shape}")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ W.data.T)
        if W.requires_grad:
            W._accumulate(x.data.T @ g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    return make_result(x.data @ W.data + b.data, (x, W, b), backward)


def _patches(x: np.ndarray, ksize: tuple[int, int, int]) -> np.ndarray:
    """Zero-padded patch matrix ``(N*H*W*T, kh*kw*kt*C)`` of ``x: (N, C, H, W, T)``.

    Built from a channels-last copy so that each (kt, C) block of a patch is
    one contiguous run; columns are ordered (kh, kw, kt, C).
    """
    n, c, h, w, t = x.shape
    kh, kw, kt = ksize
    xl = np.zeros((n, h + kh - 1, w + kw - 1, t + kt - 1, c), dtype=x.dtype)
    xl[:, kh // 2 : kh // 2 + h, kw // 2 : kw // 2 + w, kt // 2 : kt // 2 + t] = x.transpose(0, 2, 3, 4, 1)
    s = xl.strides
    view = as_strided(
        xl,
        shape=(n, h, w, t, kh, kw, kt * c),
        strides=(s[0], s[1], s[2], s[3], s[1], s[2], s[4]),
        writeable=False,
    )
    return view.reshape(n * h * w * t, kh * kw * kt * c)


def _conv_same_raw(x: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, _, h, w, t = x.shape
    f = k.shape[0]
    cols = _patches(x, k.shape[2:])
    kmat = k.transpose(0, 2, 3, 4, 1).reshape(f, -1)
    out = cols @ kmat.T  # (N*H*W*T, F)
    return out.reshape(n, h, w, t, f).transpose(0, 4, 1, 2, 3), cols


def conv3d_same(x: Tensor, k: Tensor, b: Tensor) -> Tensor:
    """Stride-1 zero-padded 3-D cross-correlation preserving ``(H, W, T)``.

    ``x: (N, C, H, W, T)``, ``k: (F, C, kh, kw, kt)`` with odd kernel sizes,
    ``b: (F,)``.
    """
    x, k, b = as_tensor(x), as_tensor(k), as_tensor(b)
    if x.ndim != 5 or k.ndim != 5 or b.ndim != 1:
        raise ShapeError(f"conv3d_same expects 5-D input and kernel; got {x.shape}, {k.shape}, {b.shape}")
    if x.shape[1] != k.shape[1]:
        raise ShapeError(f"conv3d_same: input has {x.shape[1]} channels, kernel expects {k.shape[1]}")
    if b.shape[0] != k.shape[0]:
        raise ShapeError(f"conv3d_same: bias length {b.shape[0]} != filter count {k.shape[0]}")
    if any(s % 2 == 0 for s in k.shape[2:]):
        raise ShapeError(f"conv3d_same needs odd kernel sizes, got {k.shape[2:]}")

    out, cols = _conv_same_raw(x.data, k.data)
    out += b.data[None, :, None, None, None]

    def backward(g):
        f = k.shape[0]
        if k.requires_grad:
            g2 = g.transpose(0, 2, 3, 4, 1).reshape(-1, f)
            kshape = (f, *k.shape[2:], k.shape[1])
            k._accumulate((g2.T @ cols).reshape(kshape).transpose(0, 4, 1, 2, 3))
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3, 4)))
        if x.requires_grad:
            flipped = np.ascontiguousarray(k.data[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4))
            x._accumulate(_conv_same_raw(g, flipped)[0])

    return make_result(out, (x, k, b), backward)


def maxpool3d(x: Tensor, window: tuple[int, int, int] = (2, 2, 1)) -> Tensor:
    """Non-overlapping max pooling over ``(H, W, T)``.

    The gradient goes to the first maximal element of each window in
    row-major window order.
    """
    x = as_tensor(x)
    if x.ndim != 5:
        raise ShapeError(f"maxpool3d expects (N, C, H, W, T), got {x.shape}")
    ph, pw, pt = window
    n, c, h, w, t = x.shape
    if h % ph or w % pw or t % pt:
        raise ShapeError(f"maxpool3d: dims {(h, w, t)} not divisible by window {window}")
    blocks = x.data.reshape(n, c, h // ph, ph, w // pw, pw, t // pt, pt)
    blocks = blocks.transpose(0, 1, 2, 4, 6, 3, 5, 7).reshape(n, c, h // ph, w // pw, t // pt, ph * pw * pt)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, h // ph, w // pw, t // pt, ph, pw, pt).transpose(0, 1, 2, 5, 3, 6, 4, 7)
        x._accumulate(gb.reshape(x.shape))

    return make_result(out, (x,), backward)


# ----------------------------------------------------------------- recurrent


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_seq(x: Tensor, Wx: Tensor, Wh: Tensor, b: Tensor) -> Tensor:
    """Single-layer LSTM returning every hidden state.

    ``x: (N, T, I)``, ``Wx: (I, 4U)``, ``Wh: (U, 4U)``, ``b: (4U,)`` with gate
    blocks ordered input, forget, candidate, output. Initial state is zero.
    Output ``(N, T, U)``.
    """
    x, Wx, Wh, b = (as_tensor(a) for a in (x, Wx, Wh, b))
    if x.ndim != 3 or Wx.ndim != 2 or Wh.ndim != 2 or b.ndim != 1:
        raise ShapeError(f"lstm_seq: bad ranks {x.shape}, {Wx.shape}, {Wh.shape}, {b.shape}")
    n, steps, n_in = x.shape
    units = Wh.shape[0]
    if Wx.shape != (n_in, 4 * units) or Wh.shape != (units, 4 * units) or b.shape != (4 * units,):
        raise ShapeError(
            f"lstm_seq: expected Wx {(n_in, 4 * units)}, Wh {(units, 4 * units)}, b {(4 * units,)}; "
            f"got {Wx.shape}, {Wh.shape}, {b.shape}"
        )
    dt = x.dtype
    u = units
    xz = (x.data.reshape(n * steps, n_in) @ Wx.data).reshape(n, steps, 4 * u) + b.data
    hs = np.zeros((n, steps + 1, u), dtype=dt)
    cs = np.zeros((n, steps + 1, u), dtype=dt)
    gates = np.empty((n, steps, 4 * u), dtype=dt)
    for t in range(steps):
        z = xz[:, t] + hs[:, t] @ Wh.data
        i = _sigmoid(z[:, :u])
        f = _sigmoid(z[:, u : 2 * u])
        gc = np.tanh(z[:, 2 * u : 3 * u])
        o = _sigmoid(z[:, 3 * u :])
        cs[:, t + 1] = f * cs[:, t] + i * gc
        hs[:, t + 1] = o * np.tanh(cs[:, t + 1])
        gates[:, t] = np.concatenate([i, f, gc, o], axis=1)

    def backward(g):
        dz_all = np.empty_like(gates)
        dh_next = np.zeros((n, u), dtype=dt)
        dc_next = np.zeros((n, u), dtype=dt)
        for t in reversed(range(steps)):
            i, f, gc, o = (gates[:, t, j * u : (j + 1) * u] for j in range(4))
            tc = np.tanh(cs[:, t + 1])
            dh = g[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz_all[:, t, :u] = dc * gc * i * (1.0 - i)
            dz_all[:, t, u : 2 * u] = dc * cs[:, t] * f * (1.0 - f)
            dz_all[:, t, 2 * u : 3 * u] = dc * i * (1.0 - gc * gc)
            dz_all[:, t, 3 * u :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz_all[:, t] @ Wh.data.T
        dz2 = dz_all.reshape(n * steps, 4 * u)
        if Wx.requires_grad:
            Wx._accumulate(x.data.reshape(n * steps, n_in).T @ dz2)
        if Wh.requires_grad:
            Wh._accumulate(hs[:, :-1].reshape(n * steps, u).T @ dz2)
        if b.requires_grad:
            b._accumulate(dz2.sum(axis=0))
        if x.requires_grad:
            x._accumulate((dz2 @ Wx.data.T).reshape(x.shape))

    return make_result(hs[:, 1:].copy(), (x, Wx, Wh, b), backward)


# ---------------------------------------------------------- normalization


@dataclass
class RunningMoments:
    """Batch-norm running statistics; updated in place by training passes."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, features: int, dtype=np.float64) -> "RunningMoments":
        return cls(np.zeros(features, dtype=dtype), np.ones(features, dtype=dtype))


BN_EPS = 1e-5
BN_MOMENTUM = 0.99


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    moments: RunningMoments,
    mode: str,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-feature normalisation; features live on axis 1.

    Training mode normalises with the batch statistics (biased variance)
    computed over every axis except 1, and folds them into ``moments``.
    """
    _check_mode(mode)
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim < 2:
        raise ShapeError(f"batchnorm expects at least (N, F), got {x.shape}")
    feat = x.shape[1]
    if gamma.shape != (feat,) or beta.shape != (feat,):
        raise ShapeError(f"batchnorm: gamma/beta must be ({feat},), got {gamma.shape}, {beta.shape}")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, feat) + (1,) * (x.ndim - 2)
    count = x.data.size // feat

    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("batchnorm in training mode needs a batch of at least 2")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        moments.mean[...] = momentum * moments.mean + (1.0 - momentum) * mu
        moments.var[...] = momentum * moments.var + (1.0 - momentum) * var
    else:
        mu, var = moments.mean.astype(x.dtype), moments.var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(bshape)
            if mode == "train":
                s1 = dxhat.sum(axis=axes).reshape(bshape)
                s2 = (dxhat * xhat).sum(axis=axes).reshape(bshape)
                dx = (inv_std.reshape(bshape) / count) * (count * dxhat - s1 - xhat * s2)
            else:
                dx = dxhat * inv_std.reshape(bshape)
            x._accumulate(dx)

    return make_result(out, (x, gamma, beta), backward)


# -------------------------------------------------------------- stochastic


def dropout(x: Tensor, p: float, mode: str, seed=None) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p)."""
    _check_mode(mode)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    x = as_tensor(x)
    if mode == "infer" or p == 0.0:
        return x
    keep = (_rng(seed).random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)

    def backward(g):
        x._accumulate(g * keep)

    return make_result(x.data * keep, (x,), backward)


def gaussian_noise(x: Tensor, sigma: float, mode: str, seed=None) -> Tensor:
    """Additive i.i.d. ``N(0, sigma^2)`` noise in training mode; identity otherwise."""
    _check_mode(mode)
    if sigma < 0:
        raise ValueError(f"noise sigma must be nonnegative, got {sigma}")
    x = as_tensor(x)
    if mode == "infer" or sigma == 0.0:
        return x
    noise = (_rng(seed).standard_normal(x.shape) * sigma).astype(x.dtype)

    def backward(g):
        x._accumulate(g)

    return make_result(x.data + noise, (x,), backward)


# ------------------------------------------------------------- activations


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    scale = np.where(pos, 1.0, slope).astype(x.dtype)

    def backward(g):
        x._accumulate(g * scale)

    return make_result(x.data * scale, (x,), backward)


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    ex = np.exp(np.minimum(x.data, 0.0))
    out = np.where(pos, x.data, alpha * (ex - 1.0)).astype(x.dtype)

    def backward(g):
        x._accumulate(g * np.where(pos, 1.0, alpha * ex).astype(x.dtype))

    return make_result(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, clamped one machine epsilon inside (0, 1)."""
    x = as_tensor(x)
    eps = np.finfo(x.dtype).eps
    out = np.clip(_sigmoid(x.data), eps, 1.0 - eps)

    def backward(g):
        x._accumulate(g * out * (1.0 - out))

    return make_result(out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - out * out))

    return make_result(out, (x,), backward)


# ------------------------------------------------------------------ shapes


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    if -1 in shape or int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return make_result(x.data.reshape(shape), (x,), backward)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose axes {axes} invalid for rank {x.ndim}")
    inverse = np.argsort(axes)

    def backward(g):
        x._accumulate(g.transpose(inverse))

    return make_result(np.ascontiguousarray(x.data.transpose(axes)), (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x._accumulate(np.broadcast_to(g, x.shape).copy())

    return make_result(np.asarray(x.data.sum()), (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    n = x.data.size

    def backward(g):
        x._accumulate(np.broadcast_to(g / n, x.shape).copy())

    return make_result(np.asarray(x.data.mean()), (x,), backward)


def square(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x._accumulate(2.0 * g * x.data)

    return make_result(x.data * x.data, (x,), backward)
