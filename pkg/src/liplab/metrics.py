"""Spectrogram similarity measures and the evaluation report."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audspec import CHANNELS_PER_OCTAVE, AudSpec

LSD_EPS = 1e-5
STMI_MAX_RATE_HZ = 32.0
STMI_MAX_SCALE = 8.0  # cycles per octave
STMI_NOTE = (
    "stmi is a modulation-spectrum index (2-D DFT of the auditory spectrogram), "
    "not the full cortical-model STMI; use it for relative comparisons only"
)


def _frames(x) -> np.ndarray:
    return np.asarray(x.frames if isinstance(x, AudSpec) else x, dtype=np.float64)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def corr2d(a, b) -> float:
    """Pearson correlation over all entries of two equal-shape arrays."""
    a, b = _frames(a), _frames(b)
    _same_shape(a, b)
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(np.vdot(da, da)), float(np.vdot(db, db))
    if saa == 0.0 or sbb == 0.0:
        raise ValueError("corr2d is undefined for a constant input")
    return float(np.clip(np.vdot(da, db) / np.sqrt(saa * sbb), -1.0, 1.0))


def _modulation_magnitude(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.abs(np.fft.fft2(x - x.mean()))[mask]


def stmi(reference, test, frame_ms: float | None = None) -> float:
    """Modulation-spectrum agreement index in [0, 1].

    ``1 - |T - N|^2 / |T|^2`` over the magnitudes of the 2-D DFT of the
    mean-removed spectrograms, restricted to rates up to 32 Hz and scales up
    to 8 cycles/octave, clamped at zero.
    """
    if frame_ms is None:
        frame_ms = reference.params.frm_len if isinstance(reference, AudSpec) else 10.0
    ref, tst = _frames(reference), _frames(test)
    _same_shape(ref, tst)
    if ref.ndim != 2:
        raise ValueError(f"expected a (T, F) spectrogram, got {ref.shape}")
    rates = np.abs(np.fft.fftfreq(ref.shape[0], d=frame_ms / 1000.0))
    scales = np.abs(np.fft.fftfreq(ref.shape[1], d=1.0 / CHANNELS_PER_OCTAVE))
    mask = (rates[:, None] <= STMI_MAX_RATE_HZ) & (scales[None, :] <= STMI_MAX_SCALE)
    t = _modulation_magnitude(ref, mask)
    energy = float(np.sum(t * t))
    if energy <= 0.0:
        raise ValueError("stmi reference is silent (no modulation energy)")
    n = _modulation_magnitude(tst, mask)
    return float(max(0.0, 1.0 - np.sum((t - n) ** 2) / energy))


def log_spectral_distance(a, b, eps: float = LSD_EPS) -> float:
    """RMS over all bins of ``20 log10((a + eps) / (b + eps))``, in dB."""
    a, b = _frames(a), _frames(b)
    _same_shape(a, b)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("log spectral distance needs nonnegative spectrograms")
    d = 20.0 * np.log10((a + eps) / (b + eps))
    return float(np.sqrt(np.mean(np.mean(d * d, axis=-1))))


@dataclass
class MetricReport:
    per_sample: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    KEYS = ("corr2d", "stmi", "lsd_db")

    def add(self, sample_id: str, reference, test) -> dict:
        row = {
            "id": sample_id,
            "corr2d": corr2d(reference, test),
            "stmi": stmi(reference, test),
            "lsd_db": log_spectral_distance(reference, test),
        }
        self.per_sample.append(row)
        return row

    @property
    def mean(self) -> dict:
        if not self.per_sample:
            return {k: None for k in self.KEYS}
        return {k: float(np.mean([r[k] for r in self.per_sample])) for k in self.KEYS}

    def to_dict(self) -> dict:
        return {"per_sample": self.per_sample, "mean": self.mean, "config": {**self.config, "note": STMI_NOTE}}
