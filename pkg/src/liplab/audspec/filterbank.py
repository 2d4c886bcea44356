"""Constant-Q cochlear filterbank on a 24 channels/octave grid.

Each channel is a 4th-order gammatone FIR whose bandwidth scales with its
centre frequency. Filtering runs in the frequency domain so that analysis and
its adjoint (time-reversed filtering) share one set of cached responses.
"""

from __future__ import annotations

import functools

import numpy as np
from scipy import fft as sfft

N_CHANNELS = 128
CHANNELS_PER_OCTAVE = 24
# Asymptotic ERB quality factor (Glasberg & Moore); gives a constant-Q bank.
EAR_Q = 9.26449
GT_ORDER = 4
# Envelope floor (relative to its peak) used to truncate the impulse responses.
_TAIL_FLOOR = 1e-5


def center_frequency(k, shft: float = -1.0):
    """Centre frequency in Hz of channel ``k`` (0-based).

    ``CF(k) = 440 * 2 ** ((k - 31) / 24 + shft)``; with ``shft=-1`` the grid
    spans roughly 90 Hz to 3.5 kHz.
    """
    k = np.asarray(k, dtype=np.float64)
    # split into whole octaves and a remainder so that CF(k + 24) = 2 CF(k) exactly
    octave = np.floor((k - 31.0) / CHANNELS_PER_OCTAVE)
    rem = k - 31.0 - CHANNELS_PER_OCTAVE * octave
    return np.ldexp(440.0 * 2.0 ** (rem / CHANNELS_PER_OCTAVE + shft), octave.astype(int))


def _bandwidth(cf):
    # gammatone decay rate b = 1.019 * ERB
    return 1.019 * cf / EAR_Q


def impulse_length(sample_rate: int, shft: float = -1.0) -> int:
    """Taps needed for the lowest channel's envelope to fall below the floor."""
    b = _bandwidth(center_frequency(0, shft))
    # t^3 exp(-2 pi b t) peaks at t = 3 / (2 pi b); solve for the floor on a grid
    t = np.arange(1, 40 * sample_rate) / sample_rate
    env = t**3 * np.exp(-2 * np.pi * b * t)
    env /= env.max()
    last = np.nonzero(env > _TAIL_FLOOR)[0][-1]
    return int(last) + 2


class CochlearFilterbank:
    """129 gammatone channels (128 outputs plus one guard channel on top).

    The guard channel exists so the topmost output channel has an upper
    neighbour for lateral inhibition.

    Args:
        sample_rate: Hz.
        shft: octave shift of the centre-frequency grid.
    """

    def __init__(self, sample_rate: int = 8000, shft: float = -1.0):
        self.sample_rate = int(sample_rate)
        self.shft = float(shft)
        self.n_bands = N_CHANNELS + 1
        self.cf = center_frequency(np.arange(self.n_bands), self.shft)
        nyquist = self.sample_rate / 2
        # channels this close to Nyquist would alias; they are silenced
        self.active = self.cf <= 0.95 * nyquist
        self.taps = impulse_length(self.sample_rate, self.shft)
        self.impulse_responses = self._design()

    def _design(self) -> np.ndarray:
        sr = self.sample_rate
        t = np.arange(self.taps) / sr
        out = np.zeros((self.n_bands, self.taps))
        for k in np.nonzero(self.active)[0]:
            cf = self.cf[k]
            b = _bandwidth(cf)
            g = t ** (GT_ORDER - 1) * np.exp(-2 * np.pi * b * t) * np.cos(2 * np.pi * cf * t)
            # unit gain at the centre frequency
            gain = np.abs(np.sum(g * np.exp(-2j * np.pi * cf * t)))
            out[k] = g / gain
        return out

    def response(self, nfft: int) -> np.ndarray:
        """Complex one-sided frequency responses, shape ``(n_bands, nfft//2+1)``."""
        return _cached_response(self.sample_rate, self.shft, nfft)

    def fft_size(self, n: int) -> int:
        return sfft.next_fast_len(n + self.taps - 1, real=True)

    def analyze(self, x: np.ndarray) -> np.ndarray:
        """Causal filtering of ``x`` by every channel, shape ``(n_bands, len(x))``."""
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[-1]
        nfft = self.fft_size(n)
        spec = sfft.rfft(x, nfft)
        return sfft.irfft(self.response(nfft) * spec, nfft, axis=-1)[:, :n]

    def synthesize(self, bands: np.ndarray, floor: float = 0.05) -> np.ndarray:
        """Least-squares inverse of :meth:`analyze` for in-band signals.

        Each band is passed through its time-reversed filter, the results are
        summed, and the total is equalised by the summed power response
        (floored at ``floor`` times its maximum outside the covered band).
        """
        bands = np.asarray(bands, dtype=np.float64)
        n = bands.shape[-1]
        nfft = self.fft_size(n)
        h = self.response(nfft)
        acc = np.sum(np.conj(h) * sfft.rfft(bands, nfft, axis=-1), axis=0)
        power = _cached_power(self.sample_rate, self.shft, nfft)
        power = np.maximum(power, floor * power.max())
        return sfft.irfft(acc / power, nfft)[:n]


@functools.lru_cache(maxsize=8)
def _cached_bank(sample_rate: int, shft: float) -> CochlearFilterbank:
    return CochlearFilterbank(sample_rate, shft)


@functools.lru_cache(maxsize=8)
def _cached_response(sample_rate: int, shft: float, nfft: int) -> np.ndarray:
    bank = _cached_bank(sample_rate, shft)
    h = sfft.rfft(bank.impulse_responses, nfft, axis=-1)
    h.setflags(write=False)
    return h


@functools.lru_cache(maxsize=8)
def _cached_power(sample_rate: int, shft: float, nfft: int) -> np.ndarray:
    h = _cached_response(sample_rate, shft, nfft)
    p = np.sum(np.abs(h) ** 2, axis=0)
    p.setflags(write=False)
    return p


def get_filterbank(sample_rate: int = 8000, shft: float = -1.0) -> CochlearFilterbank:
    """Shared, lazily-built filterbank instance for a (rate, shift) pair."""
    return _cached_bank(int(sample_rate), float(shft))
