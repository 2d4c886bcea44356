"""Video preprocessing, slicing, paired-sample assembly and a synthetic
talking-mouth corpus."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .audspec import AUD_RATE, AudSpecParams, Waveform, compress, read_wav, resample, wav2aud, write_wav
from .audspec.io import FormatError
from .nets import AutoencoderModel, ae_encode

FRAME_SIZE = 128
VIDEO_FPS = 25.0
SEGMENT_S = 0.2
LUMA = np.array([0.299, 0.587, 0.114])

# (F1, F2) in Hz for the eight pseudo-phones
PHONES = (
    (270, 2290),
    (390, 1990),
    (530, 1840),
    (660, 1720),
    (730, 1090),
    (570, 840),
    (440, 1020),
    (300, 870),
)
SPEAKER_PITCH = (110.0, 146.0, 196.0, 233.0)
_FORMANT_BW = (80.0, 120.0)


@dataclass(frozen=True)
class FrameSequence:
    """``frames`` is ``(T, H, W)`` grayscale (or ``(T, H, W, 3)`` before
    :func:`preprocess`)."""

    frames: np.ndarray
    frame_rate: float = VIDEO_FPS

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim not in (3, 4) or (frames.ndim == 4 and frames.shape[3] != 3):
            raise ValueError(f"frames must be (T, H, W) or (T, H, W, 3), got {frames.shape}")
        if frames.shape[0] == 0:
            raise ValueError("frame sequence is empty")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frames contain non-finite values")
        if not self.frame_rate > 0:
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate}")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.n_frames / self.frame_rate


# ------------------------------------------------------------ preprocessing


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """``(n_out, n_in)`` linear-interpolation weights, pixel centres aligned
    (source coordinate ``(i + 0.5) * n_in / n_out - 0.5``, clamped)."""
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def resize(frames: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of ``(T, H, W)`` frames."""
    ry = bilinear_matrix(frames.shape[1], height)
    rx = bilinear_matrix(frames.shape[2], width)
    return np.einsum("yh,thw,xw->tyx", ry, frames, rx, optimize=True)


def preprocess(fs: FrameSequence, size: int = FRAME_SIZE) -> FrameSequence:
    """Grayscale, bilinear resize to ``size x size``, then zero mean and unit
    standard deviation over the whole sequence."""
    frames = fs.frames
    if frames.ndim == 4:
        frames = frames @ LUMA
    if frames.shape[1:] != (size, size):
        frames = resize(frames, size, size)
    std = frames.std()
    if std < 1e-12:
        raise ValueError("cannot normalise a constant frame sequence")
    return FrameSequence((frames - frames.mean()) / std, fs.frame_rate)


def _forward_diff(x: np.ndarray) -> np.ndarray:
    d = np.empty_like(x)
    d[..., :-1] = x[..., 1:] - x[..., :-1]
    d[..., -1] = d[..., -2]
    return d


def derivatives(frames) -> np.ndarray:
    """Stack a ``(T, H, W)`` clip with its first and second forward
    differences in time (last difference repeated) as ``(3, H, W, T)``."""
    if isinstance(frames, FrameSequence):
        frames = frames.frames
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise ValueError(f"expected (T, H, W) frames, got {frames.shape}")
    if frames.shape[0] < 3:
        raise ValueError(f"need at least 3 frames for second differences, got {frames.shape[0]}")
    raw = np.moveaxis(frames, 0, -1)
    d1 = _forward_diff(raw)
    return np.stack([raw, d1, _forward_diff(d1)])


# ------------------------------------------------------------------ slicing


def count_slices(n_video: int, n_audio: int, lv: int, la: int) -> int:
    """Number of whole slices shared by both streams.

    Trailing remainders are dropped; if the streams disagree by more than one
    slice they are not from the same recording and this raises.
    """
    if lv < 1 or la < 1:
        raise ValueError("slice lengths must be positive")
    kv, ka = n_video // lv, n_audio // la
    k = min(kv, ka)
    if max(kv, ka) - k > 1:
        raise ValueError(f"slice count mismatch: video gives {kv} slices of {lv}, audio gives {ka} slices of {la}")
    if k == 0:
        raise ValueError(f"too short for one slice: {n_video} video frames, {n_audio} spectrogram frames")
    return k


def slice_video(d: np.ndarray, lv: int, k: int | None = None) -> list[np.ndarray]:
    """Split ``(3, H, W, T)`` into ``k`` consecutive ``(3, H, W, lv)`` slices."""
    if d.ndim != 4 or d.shape[0] != 3:
        raise ValueError(f"expected (3, H, W, T), got {d.shape}")
    k = d.shape[3] // lv if k is None else k
    if k * lv > d.shape[3] or k < 1:
        raise ValueError(f"cannot take {k} slices of {lv} frames from {d.shape[3]}")
    return [d[..., i * lv : (i + 1) * lv] for i in range(k)]


def slice_codes(codes: np.ndarray, la: int, k: int | None = None) -> list[np.ndarray]:
    """Split ``(T, B)`` bottleneck codes into ``k`` flattened ``la * B`` targets
    (time-major, so each reshapes back to ``(la, B)``)."""
    if codes.ndim != 2:
        raise ValueError(f"expected (T, B) codes, got {codes.shape}")
    k = codes.shape[0] // la if k is None else k
    if k * la > codes.shape[0] or k < 1:
        raise ValueError(f"cannot take {k} slices of {la} frames from {codes.shape[0]}")
    return [codes[i * la : (i + 1) * la].reshape(-1) for i in range(k)]


@dataclass
class PairedSample:
    id: str
    video: np.ndarray  # (K, 3, H, W, lv)
    targets: np.ndarray  # (K, la * B)
    spec: np.ndarray  # (K * la, 128) compressed spectrogram the targets encode

    @property
    def k(self) -> int:
        return self.video.shape[0]


def audio_features(w: Waveform, params: AudSpecParams | None = None) -> np.ndarray:
    """Compressed auditory spectrogram ``(T, 128)`` of a waveform at any rate."""
    if w.sample_rate != AUD_RATE:
        w = resample(w, AUD_RATE)
    return compress(wav2aud(w, params)).frames


def make_paired_sample(
    fs: FrameSequence,
    w: Waveform,
    ae: AutoencoderModel,
    size: int = FRAME_SIZE,
    sample_id: str = "",
    dtype=np.float32,
) -> PairedSample:
    cfg = ae.cfg
    video = derivatives(preprocess(fs, size))
    spec = audio_features(w)
    k = count_slices(video.shape[3], spec.shape[0], cfg.lv, cfg.la)
    spec = spec[: k * cfg.la]
    codes = ae_encode(ae, spec)
    return PairedSample(
        sample_id,
        np.stack(slice_video(video, cfg.lv, k)).astype(dtype),
        np.stack(slice_codes(codes, cfg.la, k)).astype(dtype),
        spec,
    )


# --------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class Utterance:
    frames: FrameSequence
    wave: Waveform
    phones: tuple[int, ...]
    speaker: int


def _segments(duration_s: float) -> int:
    n = int(round(duration_s / SEGMENT_S))
    if n < 1 or abs(n * SEGMENT_S - duration_s) > 1e-9:
        raise ValueError(f"duration must be a positive multiple of {SEGMENT_S} s, got {duration_s}")
    return n


def _resonator(freq: float, bw: float, sr: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.exp(-np.pi * bw / sr)
    return np.array([1.0 - r]), np.array([1.0, -2.0 * r * np.cos(2 * np.pi * freq / sr), r * r])


def synth_audio(phones, speaker: int, rng: np.random.Generator, sr: int = AUD_RATE) -> np.ndarray:
    """Glottal-like sawtooth at the speaker's pitch, filtered segment by
    segment through two formant resonators (filter state carried across)."""
    seg = int(round(SEGMENT_S * sr))
    n = seg * len(phones)
    t = np.arange(n) / sr
    f0 = SPEAKER_PITCH[speaker] * (1.0 + 0.01 * np.sin(2 * np.pi * 5.0 * t + rng.uniform(0, 2 * np.pi)))
    src = np.diff(signal.sawtooth(np.cumsum(2 * np.pi * f0 / sr)), prepend=0.0)
    out = np.empty(n)
    states = [np.zeros(2), np.zeros(2)]
    for i, ph in enumerate(phones):
        y = src[i * seg : (i + 1) * seg]
        for j, (freq, bw) in enumerate(zip(PHONES[ph], _FORMANT_BW)):
            b, a = _resonator(freq, bw, sr)
            y, states[j] = signal.lfilter(b, a, y, zi=states[j])
        out[i * seg : (i + 1) * seg] = y
    out += 1e-3 * rng.standard_normal(n)
    return 0.5 * out / np.abs(out).max()


def mouth_shape(phone: int) -> tuple[float, float]:
    """(vertical, horizontal) inner semi-axes in pixels at 128 x 128; opening
    grows with F1 and width with F2, so distinct phones give distinct shapes."""
    f1, f2 = PHONES[phone]
    f1s, f2s = [p[0] for p in PHONES], [p[1] for p in PHONES]
    a = 3.0 + 22.0 * (f1 - min(f1s)) / (max(f1s) - min(f1s))
    b = 14.0 + 30.0 * (f2 - min(f2s)) / (max(f2s) - min(f2s))
    return a, b


def _ellipse_coverage(yy, xx, cy, cx, a, b) -> np.ndarray:
    u, v = (yy - cy) / a, (xx - cx) / b
    rho = np.sqrt(u * u + v * v)
    grad = np.sqrt((u / a) ** 2 + (v / b) ** 2) / np.maximum(rho, 1e-9)
    dist = (rho - 1.0) / np.maximum(grad, 1e-9)
    return np.clip(0.5 - dist, 0.0, 1.0)


def render_face(phone: int, speaker: int, size: int = FRAME_SIZE) -> np.ndarray:
    """One noiseless ``size x size`` frame: a left-right symmetric face patch
    with nostrils spaced by speaker and a mouth shaped by the phone."""
    s = size / FRAME_SIZE
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cx = size / 2
    img = 0.55 - 0.15 * ((yy / size - 0.5) ** 2 + (xx / size - 0.5) ** 2)
    gap = (8.0 + 4.0 * speaker) * s
    for side in (-1, 1):
        img -= 0.35 * _ellipse_coverage(yy, xx, 44 * s, cx + side * gap, 3.5 * s, 3.5 * s)
    a, b = mouth_shape(phone)
    lip = 3.0 * s
    mouth_y = 84 * s
    outer = _ellipse_coverage(yy, xx, mouth_y, cx, a * s + lip, b * s + lip)
    inner = _ellipse_coverage(yy, xx, mouth_y, cx, a * s, b * s)
    img = img * (1 - outer) + 0.85 * outer
    img = img * (1 - inner) + 0.05 * inner
    return np.clip(img, 0.0, 1.0)


def synth_utterance(seed: int, duration_s: float = 3.0, speaker: int | None = None) -> Utterance:
    n_seg = _segments(duration_s)
    rng = np.random.default_rng(seed)
    if speaker is None:
        speaker = int(rng.integers(len(SPEAKER_PITCH)))
    phones = tuple(int(p) for p in rng.integers(len(PHONES), size=n_seg))
    per_seg = int(round(SEGMENT_S * VIDEO_FPS))
    faces = {ph: render_face(ph, speaker) for ph in set(phones)}
    frames = np.stack([faces[ph] for ph in phones for _ in range(per_seg)])
    frames = np.clip(frames + 0.01 * rng.standard_normal(frames.shape), 0.0, 1.0)
    audio = synth_audio(phones, speaker, rng)
    return Utterance(FrameSequence(frames, VIDEO_FPS), Waveform(audio, AUD_RATE), phones, speaker)


def synth_pair(seed: int, duration_s: float = 3.0) -> tuple[FrameSequence, Waveform]:
    u = synth_utterance(seed, duration_s)
    return u.frames, u.wave


# ------------------------------------------------------------------ files

VFRM_MAGIC = b"VFRM"
VFRM_VERSION = 1
_VFRM_HEADER = struct.Struct("<4sIIIIf")


def to_u8(frames: np.ndarray) -> np.ndarray:
    return np.round(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_vfrm(path, fs: FrameSequence) -> None:
    if fs.frames.ndim != 3:
        raise ValueError("VFRM stores grayscale (T, H, W) frames")
    t, h, w = fs.frames.shape
    with open(path, "wb") as f:
        f.write(_VFRM_HEADER.pack(VFRM_MAGIC, VFRM_VERSION, t, h, w, fs.frame_rate))
        f.write(to_u8(fs.frames).tobytes())


def read_vfrm(path) -> FrameSequence:
    data = Path(path).read_bytes()
    if data[:4] != VFRM_MAGIC:
        raise FormatError(f"bad VFRM magic {data[:4]!r}, expected {VFRM_MAGIC!r}", 0)
    if len(data) < _VFRM_HEADER.size:
        raise FormatError(f"VFRM header truncated ({len(data)} bytes)", len(data))
    _, version, t, h, w, fps = _VFRM_HEADER.unpack_from(data)
    if version != VFRM_VERSION:
        raise FormatError(f"unsupported VFRM version {version}", 4)
    expected = _VFRM_HEADER.size + t * h * w
    if len(data) != expected:
        raise FormatError(f"VFRM payload is {len(data) - _VFRM_HEADER.size} bytes, header implies {t * h * w}", _VFRM_HEADER.size)
    pixels = np.frombuffer(data, dtype=np.uint8, offset=_VFRM_HEADER.size).reshape(t, h, w)
    return FrameSequence(pixels / 255.0, float(fps))


# ------------------------------------------------------------------ corpus

SPLIT_FRACTIONS = (0.9, 0.05, 0.05)


def split_sizes(n: int, fractions=SPLIT_FRACTIONS) -> tuple[int, int, int]:
    """Train/val/test counts; val and test get at least one sample once n >= 3."""
    if n < 1:
        raise ValueError("need at least one sample")
    if n < 3:
        return n, 0, 0
    n_val = max(1, int(round(fractions[1] * n)))
    n_test = max(1, int(round(fractions[2] * n)))
    return n - n_val - n_test, n_val, n_test


def build_dataset(n_samples: int, seed: int, out_dir, duration_s: float = 3.0) -> list[dict]:
    """Write ``wav/<id>.wav``, ``frames/<id>.vfrm`` and ``manifest.json``."""
    _segments(duration_s)
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_samples)]
    n_train, n_val, _ = split_sizes(n_samples)
    order = np.random.default_rng(seed).permutation(n_samples)
    split = {}
    for rank, idx in enumerate(order):
        split[int(idx)] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    manifest = []
    for i, s in enumerate(seeds):
        sid = f"s{i:05d}"
        fs, w = synth_pair(s, duration_s)
        wav_rel, frm_rel = f"wav/{sid}.wav", f"frames/{sid}.vfrm"
        write_wav(out / wav_rel, w)
        write_vfrm(out / frm_rel, fs)
        manifest.append({"id": sid, "wav": wav_rel, "frames": frm_rel, "split": split[i], "seed": s})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def load_manifest(data_dir) -> list[dict]:
    path = Path(data_dir) / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"no manifest.json in {data_dir}")
    entries = json.loads(path.read_text())
    if not isinstance(entries, list) or any(not {"id", "wav", "frames", "split"} <= set(e) for e in entries):
        raise ValueError(f"{path} is not a corpus manifest")
    return entries


def load_entry(data_dir, entry: dict) -> tuple[FrameSequence, Waveform]:
    root = Path(data_dir)
    return read_vfrm(root / entry["frames"]), read_wav(root / entry["wav"])
