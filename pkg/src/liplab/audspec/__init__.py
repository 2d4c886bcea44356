from .filterbank import CHANNELS_PER_OCTAVE, N_CHANNELS, CochlearFilterbank, center_frequency, get_filterbank
from .io import FormatError, read_auds, read_wav, write_auds, write_wav
from .transform import (
    AUD_RATE,
    AudSpec,
    AudSpecParams,
    Waveform,
    aud2wav,
    compress,
    decompress,
    resample,
    wav2aud,
)

__all__ = [
    "AUD_RATE",
    "AudSpec",
    "AudSpecParams",
    "CHANNELS_PER_OCTAVE",
    "CochlearFilterbank",
    "FormatError",
    "N_CHANNELS",
    "Waveform",
    "aud2wav",
    "center_frequency",
    "compress",
    "decompress",
    "get_filterbank",
    "read_auds",
    "read_wav",
    "resample",
    "wav2aud",
    "write_auds",
    "write_wav",
]
