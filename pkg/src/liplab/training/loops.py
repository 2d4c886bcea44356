"""Training loops for the autoencoder and the lip reader."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..metrics import corr2d
from ..nets import (
    AutoencoderModel,
    LipReaderModel,
    NetConfig,
    build_autoencoder,
    build_lipreader,
)
from ..tensorcore import Tensor
from ..tensorcore.tensor import ShapeError
from .augment import augment
from .losses import LossSpec, batch_loss, loss_value
from .optim import AdamState, PlateauState, adam_step, plateau_update

log = logging.getLogger("liplab.training")

_PREDICT_CHUNK = 64


@dataclass
class TrainConfig:
    loss: LossSpec = field(default_factory=LossSpec)
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 150
    patience: int = 4
    lr_factor: float = 5.0
    seed: int = 0
    split: tuple[float, float, float] = (0.9, 0.05, 0.05)
    # fraction of training slices augmented each epoch (lip reader only)
    augment_prob: float = 0.5

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossSpec.from_dict(self.loss)
        self.split = tuple(float(s) for s in self.split)
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm needs batch statistics)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be three nonnegative numbers summing to 1, got {self.split}")
        if not 0.0 <= self.augment_prob <= 1.0:
            raise ValueError("augment_prob must lie in [0, 1]")

    @classmethod
    def autoencoder_defaults(cls, **kw) -> "TrainConfig":
        return cls(**{"batch_size": 128, "epochs": 50, **kw})

    @classmethod
    def lipreader_defaults(cls, **kw) -> "TrainConfig":
        return cls(**{"batch_size": 32, "epochs": 150, **kw})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.to_dict()
        d["split"] = list(self.split)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainRun:
    model: AutoencoderModel | LipReaderModel
    config: dict
    seed: int
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")
    state: dict[str, np.ndarray] = field(default_factory=dict)
    degenerate_rows: int = 0

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as f:
            out = csv.writer(f, lineterminator="\n")
            out.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for r in self.history:
                out.writerow([r.epoch, f"{r.train_loss:.9g}", f"{r.val_loss:.9g}", f"{r.lr:.9g}"])


def load_train_config(path) -> tuple[TrainConfig, dict]:
    """Read a JSON training config; an optional ``"net"`` object carries
    :class:`NetConfig` overrides and is returned separately."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: training config must be a JSON object")
    net = raw.pop("net", {})
    return TrainConfig.from_dict(raw), net


def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("init", "shuffle", "layers", "augment")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def _init_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**63))


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled minibatches; a trailing batch of one is folded into the previous."""
    order = rng.permutation(n)
    cuts = list(range(size, n, size))
    if cuts and n - cuts[-1] < 2:
        cuts.pop()
    return np.split(order, cuts)


def _fit(
    model,
    train_forward: Callable[[np.ndarray, np.random.Generator], Tensor],
    predict: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    cfg: TrainConfig,
    streams: dict[str, np.random.Generator],
    prepare: Callable[[np.ndarray, np.random.Generator], np.ndarray] | None = None,
) -> TrainRun:
    if len(x) < 2:
        raise ValueError(f"need at least 2 training examples, got {len(x)}")
    params = model.params
    arrays = {name: t.data for name, t in params.tensors.items()}
    adam = AdamState()
    plateau = PlateauState(cfg.lr, patience=cfg.patience, factor=cfg.lr_factor)
    run = TrainRun(model=model, config=cfg.to_dict(), seed=cfg.seed)
    run.state = params.copy_state()
    for epoch in range(1, cfg.epochs + 1):
        total, count = 0.0, 0
        for b, idx in enumerate(_batches(len(x), cfg.batch_size, streams["shuffle"])):
            xb = x[idx]
            if prepare is not None:
                xb = prepare(xb, streams["augment"])
            params.zero_grad()
            pred = train_forward(xb, streams["layers"])
            loss, degenerate = batch_loss(pred, y[idx], cfg.loss)
            value = float(loss.data)
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}, batch {b} (lr={plateau.lr:g})")
            loss.backward()
            grads = {n: t.grad for n, t in params.tensors.items() if t.grad is not None}
            adam_step(arrays, grads, adam, plateau.lr, l2=params.l2)
            run.degenerate_rows += degenerate
            total += value * len(idx)
            count += len(idx)
        train_loss = total / count
        if len(val_x):
            val_loss = loss_value(predict(val_x), val_y, cfg.loss)
        else:
            val_loss = train_loss
        if not np.isfinite(val_loss):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        run.history.append(EpochRecord(epoch, train_loss, val_loss, plateau.lr))
        if val_loss < run.best_val:
            run.best_val, run.best_epoch = val_loss, epoch
            run.state = params.copy_state()
        plateau = plateau_update(plateau, val_loss)
        log.info("epoch %d train %.5f val %.5f lr %.3g", epoch, train_loss, val_loss, run.history[-1].lr)
    params.load_state_dict(run.state)
    return run


def _chunked(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, chunk: int = _PREDICT_CHUNK) -> np.ndarray:
    return np.concatenate([fn(x[i : i + chunk]) for i in range(0, len(x), chunk)])


# ------------------------------------------------------------ autoencoder


def reconstruct(ae: AutoencoderModel, frames: np.ndarray, code_noise: float = 0.0, rng=None) -> np.ndarray:
    """Decode the encoded frames; optionally perturb the codes with
    ``N(0, code_noise^2)`` first."""
    codes = ae.encode(frames)
    if code_noise > 0:
        codes = codes + np.random.default_rng(rng).normal(0.0, code_noise, codes.shape).astype(codes.dtype)
    return ae.decode(codes)


def train_autoencoder(
    train_frames: np.ndarray,
    val_frames: np.ndarray,
    cfg: TrainConfig | None = None,
    net: NetConfig | None = None,
    dtype=np.float32,
) -> TrainRun:
    """Fit the autoencoder to reproduce 128-bin compressed spectrogram frames."""
    cfg = cfg or TrainConfig.autoencoder_defaults()
    x = np.asarray(train_frames, dtype=dtype)
    vx = np.asarray(val_frames, dtype=dtype).reshape(-1, x.shape[-1] if x.ndim == 2 else 128)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"autoencoder corpus must be a non-empty (N, 128) array, got {x.shape}")
    streams = _streams(cfg.seed)
    ae = build_autoencoder(net, _init_seed(streams["init"]), dtype)

    def forward(xb, rng):
        return ae.forward(Tensor(xb), "train", rng)[0]

    return _fit(ae, forward, lambda v: _chunked(lambda c: reconstruct(ae, c), v, 4096), x, x, vx, vx, cfg, streams)


def autoencoder_corr2d(ae: AutoencoderModel, frames: np.ndarray, code_noise: float = 0.0, rng=None) -> float:
    return corr2d(reconstruct(ae, frames, code_noise, rng), frames)


# ---------------------------------------------------------------- lip reader


def _stack(samples) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0,)), np.zeros((0,))
    return np.concatenate([s.video for s in samples]), np.concatenate([s.targets for s in samples])


def predict_codes(lip: LipReaderModel, video: np.ndarray) -> np.ndarray:
    """Inference-mode lip-reader outputs for ``(M, 3, H, W, lv)`` slices."""
    return _chunked(lambda c: lip.forward(Tensor(np.asarray(c, dtype=lip.params.dtype)), "infer").data, video)


def decode_prediction(lip: LipReaderModel, ae: AutoencoderModel, video: np.ndarray) -> np.ndarray:
    """Predicted compressed spectrogram ``(K * la, 128)`` for consecutive slices."""
    codes = predict_codes(lip, video)
    return ae.decode(codes.reshape(-1, lip.cfg.bottleneck))


def check_compatible(lip_cfg: NetConfig, ae: AutoencoderModel) -> None:
    if lip_cfg.bottleneck != ae.cfg.bottleneck:
        raise ValueError(f"bottleneck mismatch: lip reader expects {lip_cfg.bottleneck}, autoencoder has {ae.cfg.bottleneck}")
    if lip_cfg.la != ae.cfg.la:
        raise ValueError(f"la mismatch: lip reader uses {lip_cfg.la}, autoencoder targets were sliced with {ae.cfg.la}")


def train_lipreader(
    train_samples: Sequence,
    val_samples: Sequence,
    ae: AutoencoderModel,
    cfg: TrainConfig | None = None,
    net: NetConfig | None = None,
    dtype=np.float32,
) -> TrainRun:
    """Regress bottleneck-code slices from video slices.

    ``net`` defaults to the autoencoder's config with the frame size taken
    from the samples.
    """
    cfg = cfg or TrainConfig.lipreader_defaults()
    x, y = _stack(train_samples)
    if x.ndim != 5:
        raise ValueError("lip reader corpus is empty")
    if net is None:
        net = replace(ae.cfg, h=x.shape[2], w=x.shape[3])
    check_compatible(net, ae)
    if y.shape[1] != net.out_width:
        raise ValueError(f"bottleneck mismatch: targets have width {y.shape[1]}, lip reader outputs {net.out_width}")
    if x.shape[1:] != (3, net.h, net.w, net.lv):
        raise ShapeError(f"video slices are {x.shape[1:]}, lip reader expects {(3, net.h, net.w, net.lv)}")
    vx, vy = _stack(val_samples)
    if vx.ndim != 5:
        vx, vy = x[:0], y[:0]
    streams = _streams(cfg.seed)
    lip = build_lipreader(net, _init_seed(streams["init"]), dtype)
    x, y, vx, vy = (a.astype(dtype, copy=False) for a in (x, y, vx, vy))

    def forward(xb, rng):
        return lip.forward(Tensor(xb), "train", rng)

    def prepare(xb, rng):
        out = xb.copy()
        for j in range(len(out)):
            if rng.random() < cfg.augment_prob:
                out[j] = augment(out[j], rng)
        return out

    return _fit(lip, forward, lambda v: predict_codes(lip, v), x, y, vx, vy, cfg, streams, prepare)


def bottleneck_corr2d(lip: LipReaderModel, samples) -> float:
    """Corr2D between predicted and target code matrices over all slices."""
    x, y = _stack(samples)
    return corr2d(predict_codes(lip, x), y)


def decoded_corr2d(lip: LipReaderModel, ae: AutoencoderModel, samples) -> float:
    """Mean per-sample Corr2D between the decoded prediction and the true
    compressed spectrogram."""
    return float(np.mean([corr2d(decode_prediction(lip, ae, s.video), s.spec) for s in samples]))
