"""Per-slice video augmentation: horizontal mirror or small pixel noise."""

from __future__ import annotations

import numpy as np

from ..tensorcore.tensor import ShapeError

NOISE_STD = 0.02
BRANCHES = ("flip", "noise")


def augment(slice_: np.ndarray, rng, branch: str | None = None, noise_std: float = NOISE_STD) -> np.ndarray:
    """Return an augmented copy of a ``(3, H, W, L)`` slice.

    A fair coin picks between mirroring the W axis of every channel (the
    derivatives of a mirrored clip are the mirrored derivatives, so nothing
    needs recomputing) and adding ``N(0, noise_std^2)`` to every value.
    ``branch`` forces one of the two.
    """
    x = np.asarray(slice_)
    if x.ndim != 4 or x.shape[0] != 3:
        raise ShapeError(f"augment expects a (3, H, W, L) slice, got {x.shape}")
    rng = np.random.default_rng(rng)
    if branch is None:
        branch = BRANCHES[int(rng.integers(2))]
    if branch == "flip":
        return x[:, :, ::-1, :].copy()
    if branch == "noise":
        return x + rng.normal(0.0, noise_std, size=x.shape).astype(x.dtype)
    raise ValueError(f"branch must be one of {BRANCHES} or None, got {branch!r}")
