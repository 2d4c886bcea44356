"""PCM16 WAV and AUDS spectrogram files."""

from __future__ import annotations

import io
import struct
import wave
from pathlib import Path

import numpy as np

from .filterbank import N_CHANNELS
from .transform import AudSpec, AudSpecParams, Waveform

AUDS_MAGIC = b"AUDS"
AUDS_VERSION = 1
_AUDS_HEADER = struct.Struct("<4sIIIffii")


class FormatError(ValueError):
    """Malformed binary file. ``offset`` is the byte position of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def _check_magic(data: bytes, expected: bytes, offset: int, what: str) -> None:
    found = data[offset : offset + len(expected)]
    if found != expected:
        raise FormatError(f"bad {what} magic {found!r}, expected {expected!r}", offset)


def read_wav(path) -> Waveform:
    """Read a mono 16-bit PCM WAV; samples are scaled by 1/32768."""
    data = Path(path).read_bytes()
    _check_magic(data, b"RIFF", 0, "RIFF")
    _check_magic(data, b"WAVE", 8, "WAVE")
    try:
        with wave.open(io.BytesIO(data), "rb") as wf:
            if wf.getnchannels() != 1:
                raise FormatError(f"expected mono audio, got {wf.getnchannels()} channels", 22)
            if wf.getsampwidth() != 2:
                raise FormatError(f"expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit", 34)
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise FormatError(f"unreadable WAV: {exc}", 12) from exc
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, w: Waveform) -> None:
    """Write ``w`` as mono PCM16, rounding to the nearest code and clipping."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())


def write_auds(path, s: AudSpec) -> None:
    p = s.params
    t, f = s.frames.shape
    header = _AUDS_HEADER.pack(AUDS_MAGIC, AUDS_VERSION, t, f, p.frm_len, p.tc, int(p.fac), int(p.shft))
    Path(path).write_bytes(header + s.frames.astype("<f4").tobytes())


def read_auds(path) -> AudSpec:
    data = Path(path).read_bytes()
    _check_magic(data, AUDS_MAGIC, 0, "AUDS")
    if len(data) < _AUDS_HEADER.size:
        raise FormatError("truncated AUDS header", len(data))
    _, version, t, f, frm_len, tc, fac, shft = _AUDS_HEADER.unpack_from(data, 0)
    if version != AUDS_VERSION:
        raise FormatError(f"unsupported AUDS version {version}", 4)
    if f != N_CHANNELS:
        raise FormatError(f"AUDS file has {f} channels, expected {N_CHANNELS}", 12)
    expected = _AUDS_HEADER.size + 4 * t * f
    if len(data) != expected:
        raise FormatError(f"AUDS payload size mismatch: file is {len(data)} bytes, header implies {expected}", _AUDS_HEADER.size)
    frames = np.frombuffer(data, dtype="<f4", offset=_AUDS_HEADER.size).reshape(t, f)
    params = AudSpecParams(frm_len=float(frm_len), tc=float(tc), fac=fac, shft=shft)
    return AudSpec(frames.astype(np.float64), params)
