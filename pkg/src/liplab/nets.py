"""The spectrogram autoencoder and the 3D-CNN + LSTM lip reader."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .tensorcore import (
    RunningMoments,
    Tensor,
    batchnorm,
    conv3d_same,
    dense,
    dropout,
    elu,
    gaussian_noise,
    leaky_relu,
    load_checkpoint,
    lstm_seq,
    maxpool3d,
    reshape,
    save_checkpoint,
    sigmoid,
    transpose,
)
from .tensorcore.tensor import ShapeError

SPEC_BINS = 128
CONV_WIDTHS = (32, 32, 32, 64, 64, 128, 128)
# conv layers (0-based) followed by a (2, 2, 1) max pool
POOL_AFTER = (0, 1, 2, 4, 6)
# dropout after the 2nd and 4th pools and after the 6th conv
DROPOUT_AFTER = (1, 4, 5)
KERNEL = (3, 3, 3)
POOL = (2, 2, 1)


@dataclass
class NetConfig:
    h: int = 128
    w: int = 128
    lv: int = 5
    la: int = 20
    bottleneck: int = 32
    noise_sigma: float = 0.05
    dropout_conv: float = 0.25
    dropout_rnn: float = 0.3
    l2: float = 0.0005
    elu_alpha: float = 1.0
    mlp_hidden: int = 512
    lstm_units: int = 512
    # dropout on the bottleneck codes (the ablation variant); 0 disables it
    ae_dropout: float = 0.0
    leaky_slope: float = 0.01

    def validate(self) -> "NetConfig":
        for name in ("h", "w", "lv", "la", "bottleneck", "mlp_hidden", "lstm_units"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"NetConfig.{name} must be positive, got {getattr(self, name)}")
        if self.bottleneck > SPEC_BINS:
            raise ValueError(f"NetConfig.bottleneck must be <= {SPEC_BINS}, got {self.bottleneck}")
        if self.noise_sigma < 0 or self.l2 < 0 or self.elu_alpha <= 0:
            raise ValueError("NetConfig: noise_sigma and l2 must be >= 0, elu_alpha > 0")
        for name in ("dropout_conv", "dropout_rnn", "ae_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"NetConfig.{name} must lie in [0, 1), got {getattr(self, name)}")
        return self

    @property
    def out_width(self) -> int:
        return self.bottleneck * self.la

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown NetConfig keys: {sorted(unknown)}")
        return cls(**d).validate()


def he_init(shape, fan_in: int, seed=None, dtype=np.float64) -> np.ndarray:
    """Zero-mean Gaussian with variance ``2 / fan_in``."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class ParamSet:
    """Named trainable tensors, their L2 multipliers, and batch-norm moments."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.tensors: dict[str, Tensor] = {}
        self.l2: dict[str, float] = {}
        self.moments: dict[str, RunningMoments] = {}

    def add(self, name: str, value: np.ndarray, l2: float = 0.0) -> Tensor:
        if name in self.tensors:
            raise KeyError(f"duplicate parameter {name!r}")
        if l2 < 0:
            raise ValueError("L2 multiplier must be nonnegative")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)
        self.tensors[name] = t
        self.l2[name] = float(l2)
        return t

    def add_norm(self, name: str, features: int) -> None:
        self.add(f"{name}.gamma", np.ones(features))
        self.add(f"{name}.beta", np.zeros(features))
        self.moments[name] = RunningMoments.fresh(features, self.dtype)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {name: t.data for name, t in self.tensors.items()}
        for name, m in self.moments.items():
            out[f"{name}.running_mean"] = m.mean
            out[f"{name}.running_var"] = m.var
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = self.state_dict()
        missing = set(expected) - set(state)
        extra = set(state) - set(expected)
        if missing or extra:
            raise KeyError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, arr in state.items():
            if arr.shape != expected[name].shape:
                raise ShapeError(f"checkpoint tensor {name!r} has shape {arr.shape}, expected {expected[name].shape}")
        for name, t in self.tensors.items():
            t.data = np.asarray(state[name], dtype=self.dtype).copy()
        for name, m in self.moments.items():
            m.mean = np.asarray(state[f"{name}.running_mean"], dtype=self.dtype).copy()
            m.var = np.asarray(state[f"{name}.running_var"], dtype=self.dtype).copy()

    def copy_state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_dict().items()}


def _dense_bn(params: ParamSet, name: str, x: Tensor, mode: str) -> Tensor:
    y = dense(x, params[f"{name}.W"], params[f"{name}.b"])
    return batchnorm(y, params[f"{name}.bn.gamma"], params[f"{name}.bn.beta"], params.moments[f"{name}.bn"], mode)


def _add_dense(params: ParamSet, name: str, n_in: int, n_out: int, rng, l2: float = 0.0, norm: bool = True) -> None:
    params.add(f"{name}.W", he_init((n_in, n_out), n_in, rng), l2=l2)
    params.add(f"{name}.b", np.zeros(n_out))
    if norm:
        params.add_norm(f"{name}.bn", n_out)


class AutoencoderModel:
    """Dense autoencoder over 128-bin spectrogram frames.

    Encoder 128 -> 512 -> 128 -> 64 -> B (sigmoid), bottleneck noise (train
    only), decoder B -> 64 -> 128. Every dense layer is batch-normalised before
    its activation; hidden and output activations are LeakyReLU.
    """

    kind = "autoencoder"
    ENCODER = (512, 128, 64)
    DECODER = (64,)

    def __init__(self, cfg: NetConfig, params: ParamSet):
        self.cfg = cfg
        self.params = params

    @property
    def encoder_layers(self) -> list[str]:
        return [f"enc{i}" for i in range(len(self.ENCODER) + 1)]

    @property
    def decoder_layers(self) -> list[str]:
        return [f"dec{i}" for i in range(len(self.DECODER) + 1)]

    def encode_tensor(self, x: Tensor, mode: str) -> Tensor:
        if x.ndim != 2 or x.shape[1] != SPEC_BINS:
            raise ShapeError(f"autoencoder input must be (N, {SPEC_BINS}), got {x.shape}")
        slope = self.cfg.leaky_slope
        *hidden, last = self.encoder_layers
        for name in hidden:
            x = leaky_relu(_dense_bn(self.params, name, x, mode), slope)
        return sigmoid(_dense_bn(self.params, last, x, mode))

    def decode_tensor(self, z: Tensor, mode: str) -> Tensor:
        if z.ndim != 2 or z.shape[1] != self.cfg.bottleneck:
            raise ShapeError(f"decoder input must be (N, {self.cfg.bottleneck}), got {z.shape}")
        slope = self.cfg.leaky_slope
        for name in self.decoder_layers:
            z = leaky_relu(_dense_bn(self.params, name, z, mode), slope)
        return z

    def forward(self, x: Tensor, mode: str, rng=None) -> tuple[Tensor, Tensor]:
        """Returns ``(reconstruction, codes)``; codes are taken before the noise."""
        rng = np.random.default_rng(rng)
        codes = self.encode_tensor(x, mode)
        z = gaussian_noise(codes, self.cfg.noise_sigma, mode, rng)
        z = dropout(z, self.cfg.ae_dropout, mode, rng)
        return self.decode_tensor(z, mode), codes

    def encode(self, frames: np.ndarray) -> np.ndarray:
        """Deterministic bottleneck codes (inference mode, no noise)."""
        return ae_encode(self, frames)

    def decode(self, codes: np.ndarray) -> np.ndarray:
        return ae_decode(self, codes)

    def n_params(self) -> int:
        return self.params.count()


def build_autoencoder(cfg: NetConfig | None = None, seed=0, dtype=np.float32) -> AutoencoderModel:
    cfg = (cfg or NetConfig()).validate()
    rng = np.random.default_rng(seed)
    params = ParamSet(dtype)
    widths = [SPEC_BINS, *AutoencoderModel.ENCODER, cfg.bottleneck, *AutoencoderModel.DECODER, SPEC_BINS]
    names = [f"enc{i}" for i in range(4)] + [f"dec{i}" for i in range(2)]
    for name, n_in, n_out in zip(names, widths[:-1], widths[1:]):
        _add_dense(params, name, n_in, n_out, rng)
    return AutoencoderModel(cfg, params)


def ae_encode(m: AutoencoderModel, frames) -> np.ndarray:
    x = Tensor(np.asarray(frames, dtype=m.params.dtype))
    return m.encode_tensor(x, "infer").data


def ae_decode(m: AutoencoderModel, codes) -> np.ndarray:
    z = Tensor(np.asarray(codes, dtype=m.params.dtype))
    return m.decode_tensor(z, "infer").data


class LipReaderModel:
    """Seven 3-D conv layers, a 512-unit LSTM, one hidden dense layer and a
    sigmoid output of ``bottleneck * la`` units."""

    kind = "lipreader"

    def __init__(self, cfg: NetConfig, params: ParamSet):
        self.cfg = cfg
        self.params = params

    @property
    def feature_shape(self) -> tuple[int, int, int, int]:
        """Conv block output ``(C, H, W, T)``."""
        n_pools = len(POOL_AFTER)
        return (CONV_WIDTHS[-1], self.cfg.h // 2**n_pools, self.cfg.w // 2**n_pools, self.cfg.lv)

    @property
    def n_features(self) -> int:
        c, h, w, _ = self.feature_shape
        return c * h * w

    def forward(self, x: Tensor, mode: str, rng=None, trace: list | None = None) -> Tensor:
        """``x: (N, 3, H, W, lv)`` -> ``(N, bottleneck * la)``.

        If ``trace`` is a list, the output shape of each conv block (without the
        batch axis) is appended to it.
        """
        cfg = self.cfg
        expected = (3, cfg.h, cfg.w, cfg.lv)
        if x.ndim != 5 or x.shape[1:] != expected:
            raise ShapeError(f"lip reader input must be (N, {', '.join(map(str, expected))}), got {x.shape}")
        rng = np.random.default_rng(rng)
        p = self.params
        for i in range(len(CONV_WIDTHS)):
            name = f"conv{i}"
            y = conv3d_same(x, p[f"{name}.K"], p[f"{name}.b"])
            y = batchnorm(y, p[f"{name}.bn.gamma"], p[f"{name}.bn.beta"], p.moments[f"{name}.bn"], mode)
            y = elu(y, cfg.elu_alpha) if i == len(CONV_WIDTHS) - 1 else leaky_relu(y, cfg.leaky_slope)
            if i in POOL_AFTER:
                y = maxpool3d(y, POOL)
            if i in DROPOUT_AFTER:
                y = dropout(y, cfg.dropout_conv, mode, rng)
            if trace is not None:
                trace.append(y.shape[1:])
            x = y
        n = x.shape[0]
        # (N, C, H, W, T) -> (N, T, C*H*W): one feature vector per video frame
        seq = reshape(transpose(x, (0, 4, 1, 2, 3)), (n, cfg.lv, self.n_features))
        h = lstm_seq(seq, p["lstm.Wx"], p["lstm.Wh"], p["lstm.b"])
        h = dropout(elu(h, cfg.elu_alpha), cfg.dropout_rnn, mode, rng)
        flat = reshape(h, (n, cfg.lv * cfg.lstm_units))
        hid = elu(_dense_bn(p, "mlp", flat, mode), cfg.elu_alpha)
        hid = dropout(hid, cfg.dropout_rnn, mode, rng)
        return sigmoid(_dense_bn(p, "out", hid, mode))

    def n_params(self) -> int:
        return self.params.count()


def build_lipreader(cfg: NetConfig | None = None, seed=0, dtype=np.float32) -> LipReaderModel:
    cfg = (cfg or NetConfig()).validate()
    n_pools = len(POOL_AFTER)
    if cfg.h % 2**n_pools or cfg.w % 2**n_pools:
        raise ValueError(f"lip reader needs H and W divisible by {2**n_pools}, got {cfg.h}x{cfg.w}")
    rng = np.random.default_rng(seed)
    params = ParamSet(dtype)
    c_in = 3
    ksize = int(np.prod(KERNEL))
    for i, c_out in enumerate(CONV_WIDTHS):
        params.add(f"conv{i}.K", he_init((c_out, c_in, *KERNEL), c_in * ksize, rng), l2=cfg.l2)
        params.add(f"conv{i}.b", np.zeros(c_out))
        params.add_norm(f"conv{i}.bn", c_out)
        c_in = c_out
    model = LipReaderModel(cfg, params)
    u = cfg.lstm_units
    n_in = model.n_features
    params.add("lstm.Wx", he_init((n_in, 4 * u), n_in, rng))
    params.add("lstm.Wh", he_init((u, 4 * u), u, rng))
    bias = np.zeros(4 * u)
    bias[u : 2 * u] = 1.0  # forget gate starts open
    params.add("lstm.b", bias)
    _add_dense(params, "mlp", cfg.lv * u, cfg.mlp_hidden, rng)
    _add_dense(params, "out", cfg.mlp_hidden, cfg.out_width, rng)
    return model


def lipreader_forward(m: LipReaderModel, slices, mode: str = "infer", rng=None) -> Tensor:
    x = slices if isinstance(slices, Tensor) else Tensor(np.asarray(slices, dtype=m.params.dtype))
    return m.forward(x, mode, rng)


# ----------------------------------------------------------------- persistence


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_model(path, model) -> None:
    """Write the LRCK checkpoint and its ``<path>.json`` config sidecar."""
    save_checkpoint(path, model.params.state_dict())
    meta = {"model": model.kind, **model.cfg.to_dict()}
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_config(path) -> tuple[str, NetConfig]:
    meta = json.loads(sidecar_path(path).read_text())
    kind = meta.pop("model")
    return kind, NetConfig.from_dict(meta)


def load_model(path, dtype=np.float32):
    kind, cfg = load_config(path)
    if kind == AutoencoderModel.kind:
        model = build_autoencoder(cfg, 0, dtype)
    elif kind == LipReaderModel.kind:
        model = build_lipreader(cfg, 0, dtype)
    else:
        raise ValueError(f"unknown model kind {kind!r} in {sidecar_path(path)}")
    model.params.load_state_dict(load_checkpoint(path))
    return model
