"""Auditory spectrogram: forward transform, iterative inversion, compression."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal

from .filterbank import N_CHANNELS, get_filterbank

log = logging.getLogger(__name__)

AUD_RATE = 8000
# hair-cell membrane time constant, ms
HAIRCELL_TC_MS = 0.5
# per-iteration channel gain cap in aud2wav
_MAX_GAIN = 1e3


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be mono (1-D), got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class AudSpecParams:
    """Cochlear model settings.

    ``fac`` selects the hair-cell nonlinearity: ``-2`` linear (bypassed),
    ``-1`` half-wave rectifier, ``0`` hard limiter, ``>0`` sigmoid with that
    softness. ``shft`` shifts the filterbank by octaves.
    """

    frm_len: float = 10.0
    tc: float = 10.0
    fac: int = -2
    shft: int = -1
    n_channels: int = N_CHANNELS

    def __post_init__(self):
        if not self.frm_len > 0:
            raise ValueError(f"frm_len must be positive, got {self.frm_len}")
        if not self.tc > 0:
            raise ValueError(f"tc must be positive, got {self.tc}")
        if self.n_channels != N_CHANNELS:
            raise ValueError(f"n_channels is fixed at {N_CHANNELS}")

    def frame_samples(self, sample_rate: int = AUD_RATE) -> int:
        n = self.frm_len * sample_rate / 1000.0
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"frm_len={self.frm_len} ms is not a whole number of samples")
        return int(round(n))


@dataclass(frozen=True)
class AudSpec:
    frames: np.ndarray
    params: AudSpecParams = field(default_factory=AudSpecParams)
    source_rate: int = AUD_RATE

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != N_CHANNELS:
            raise ValueError(f"auditory spectrogram must be T x {N_CHANNELS}, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("auditory spectrogram contains non-finite values")
        if np.any(frames < 0):
            raise ValueError("auditory spectrogram contains negative values")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def replace(self, frames) -> "AudSpec":
        return AudSpec(frames, self.params, self.source_rate)


def resample(w: Waveform, target_rate: int, numtaps_per_phase: int = 32) -> Waveform:
    """Downsample with a windowed-sinc low-pass at ``0.45 * target_rate``.

    Rates are related by a rational factor up/down; the filter runs at the
    intermediate rate ``sample_rate * up`` and is linear phase, so the output
    is time-aligned with the input.
    """
    target_rate = int(target_rate)
    if len(w) == 0:
        raise ValueError("cannot resample an empty waveform")
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate > w.sample_rate:
        raise ValueError(f"upsampling is not supported ({w.sample_rate} Hz -> {target_rate} Hz)")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), target_rate)
    ratio = Fraction(target_rate, w.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    inter_rate = w.sample_rate * up
    half = numtaps_per_phase * max(up, down) // 2
    taps = signal.firwin(2 * half + 1, 0.45 * target_rate, window=("kaiser", 8.0), fs=inter_rate)
    y = signal.resample_poly(w.samples, up, down, window=taps)
    return Waveform(y, target_rate)


def _haircell(y: np.ndarray, fac: float) -> np.ndarray:
    if fac == -2:
        return y
    if fac == -1:
        return np.maximum(y, 0.0)
    if fac == 0:
        return (y > 0).astype(y.dtype)
    if fac > 0:
        return 1.0 / (1.0 + np.exp(-y / fac))
    raise ValueError(f"unsupported hair-cell selector fac={fac}")


def _leaky(x: np.ndarray, tc_ms: float, sample_rate: int) -> np.ndarray:
    # first-order low-pass with unit DC gain
    a = np.exp(-1.0 / (tc_ms * sample_rate / 1000.0))
    return signal.lfilter([1.0 - a], [1.0, -a], x, axis=-1)


def _bands_to_frames(bands: np.ndarray, p: AudSpecParams, active: np.ndarray) -> np.ndarray:
    """Stages 2-4 on filterbank outputs ``(129, n)`` -> ``(T, 128)``."""
    hop = p.frame_samples()
    n_frames = bands.shape[-1] // hop
    y = _haircell(bands, p.fac)
    y = _leaky(y, HAIRCELL_TC_MS, AUD_RATE)
    # lateral inhibition against the next channel up, then half-wave rectify
    d = np.maximum(y[:-1] - y[1:], 0.0)
    d[~active[:-1]] = 0.0
    v = _leaky(d, p.tc, AUD_RATE)
    idx = np.arange(1, n_frames + 1) * hop - 1
    return v[:, idx].T


def wav2aud(w: Waveform, p: AudSpecParams | None = None) -> AudSpec:
    """Auditory spectrogram of an 8 kHz waveform.

    Returns ``T = floor(duration_ms / frm_len)`` frames of 128 channels.
    """
    p = p or AudSpecParams()
    if w.sample_rate != AUD_RATE:
        raise ValueError(f"wav2aud expects {AUD_RATE} Hz input, got {w.sample_rate} Hz (resample first)")
    hop = p.frame_samples()
    if len(w) < hop:
        raise ValueError(f"input of {len(w)} samples is shorter than one {p.frm_len} ms frame")
    bank = get_filterbank(AUD_RATE, p.shft)
    frames = _bands_to_frames(bank.analyze(w.samples), p, bank.active)
    return AudSpec(frames, p, w.sample_rate)


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    a = a.ravel() - a.mean()
    b = b.ravel() - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0.0:
        return -np.inf
    return float(np.dot(a, b) / den)


def _frame_gain_to_samples(ratio: np.ndarray, hop: int, n: int) -> np.ndarray:
    """Interpolate per-frame gains ``(T, C)`` to per-sample gains ``(C, n)``."""
    n_frames = ratio.shape[0]
    centers = np.arange(n_frames) * hop + (hop - 1) / 2.0
    t = np.arange(n)
    out = np.empty((ratio.shape[1], n))
    for c in range(ratio.shape[1]):
        out[c] = np.interp(t, centers, ratio[:, c])
    return out


def aud2wav(s: AudSpec, iters: int = 50, seed: int = 0, return_history: bool = False):
    """Reconstruct a waveform whose auditory spectrogram matches ``s``.

    Starting from seeded white noise, each iteration analyses the current
    estimate, rescales every channel by the ratio of target to current
    spectrogram magnitude, and resynthesises. The iterate with the highest
    2-D correlation between its spectrogram and the target is returned.

    With ``return_history=True`` a ``(waveform, scores)`` pair is returned,
    where ``scores[i]`` is the correlation of iterate ``i``.
    """
    if not isinstance(s, AudSpec):
        s = AudSpec(s)
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    p = s.params
    hop = p.frame_samples()
    target = s.frames
    n = s.n_frames * hop
    bank = get_filterbank(AUD_RATE, p.shft)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) * 1e-2

    eps = 1e-8 * max(float(target.max()), 1e-12)
    scorable = target.max() > target.min()
    best_x, best_score = None, -np.inf
    scores = []
    bands = bank.analyze(x)
    current = _bands_to_frames(bands, p, bank.active)
    for _ in range(iters):
        ratio = np.minimum(target / (current + eps), _MAX_GAIN)
        gains = _frame_gain_to_samples(ratio, hop, n)
        scaled = bands.copy()
        scaled[:-1] *= gains
        # guard channel follows its lower neighbour
        scaled[-1] *= gains[-1]
        x = bank.synthesize(scaled)
        bands = bank.analyze(x)
        current = _bands_to_frames(bands, p, bank.active)
        score = _corr(current, target) if scorable else 0.0
        scores.append(score)
        if best_x is None or score > best_score:
            best_x, best_score = x, score
    log.debug("aud2wav: best corr %.4f after %d iterations", best_score, iters)
    out = Waveform(best_x, AUD_RATE)
    if return_history:
        return out, scores
    return out


def compress(s):
    """Elementwise cube root of an :class:`AudSpec` or a nonnegative array."""
    out = np.cbrt(_nonneg(s))
    return s.replace(out) if isinstance(s, AudSpec) else out


def decompress(s):
    """Elementwise cube, inverse of :func:`compress`."""
    out = _nonneg(s) ** 3
    return s.replace(out) if isinstance(s, AudSpec) else out


def _nonneg(s) -> np.ndarray:
    frames = s.frames if isinstance(s, AudSpec) else np.asarray(s, dtype=np.float64)
    if np.any(frames < 0):
        raise ValueError("compression is defined for nonnegative spectrograms only")
    return frames
